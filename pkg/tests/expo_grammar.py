"""Minimal parser for the Prometheus text exposition format, version 0.0.4."""

import re

NAME = r"[a-zA-Z_:][a-zA-Z0-9_:]*"
LABEL = r'[a-zA-Z_][a-zA-Z0-9_]*="(?:[^"\\\n]|\\[\\"n])*"'
VALUE = r"(?:[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|[+-]Inf|NaN)"
SAMPLE = re.compile(rf"^({NAME})(?:\{{((?:{LABEL})(?:,{LABEL})*,?)?\}})? ({VALUE})(?: (-?\d+))?$")
HELP = re.compile(rf"^# HELP ({NAME}) (.*)$")
TYPE = re.compile(rf"^# TYPE ({NAME}) (counter|gauge|histogram|summary|untyped)$")
TYPES = {"counter", "gauge", "histogram", "summary", "untyped"}


class GrammarError(ValueError):
    pass


def parse(text):
    """Return ``(types, samples)``; samples are ``(name, labels dict, float)``."""
    if text and not text.endswith("\n"):
        raise GrammarError("exposition must end with a newline")
    types, samples, seen_sample_for = {}, [], set()
    for n, line in enumerate(text.split("\n")[:-1], 1):
        if not line:
            continue
        if line.startswith("#"):
            if m := TYPE.match(line):
                name = m.group(1)
                if name in types:
                    raise GrammarError(f"line {n}: second TYPE for {name}")
                if name in seen_sample_for:
                    raise GrammarError(f"line {n}: TYPE after samples for {name}")
                types[name] = m.group(2)
            elif line.startswith("# HELP ") and not HELP.match(line):
                raise GrammarError(f"line {n}: malformed HELP")
            elif line.startswith("# TYPE"):
                raise GrammarError(f"line {n}: malformed TYPE")
            continue
        m = SAMPLE.match(line)
        if not m:
            raise GrammarError(f"line {n}: malformed sample {line!r}")
        name, raw_labels, value = m.group(1), m.group(2) or "", m.group(3)
        labels = dict(re.findall(r'([a-zA-Z_][a-zA-Z0-9_]*)="((?:[^"\\]|\\.)*)"', raw_labels))
        seen_sample_for.add(name)
        samples.append((name, labels, float(value.replace("Inf", "inf"))))
    return types, samples
