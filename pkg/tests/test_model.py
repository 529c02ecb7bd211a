import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from powertrace.errors import ValidationError
from powertrace.model import (
    ALIASES, CATEGORIES, HOST, DeviceId, SamplingConfig, Tick, catalog_ids, column_name, descriptor, gpu,
    metric_catalog, parse_column, resolve_selection, schema_columns,
)


def test_catalog_has_26_entries():
    assert len(metric_catalog()) == 26
    assert len(set(catalog_ids())) == 26


def test_partition_sizes():
    sizes = {c: sum(d.category == c for d in metric_catalog()) for c in CATEGORIES}
    assert sizes == {"energy": 4, "compute": 9, "memory": 5, "communication": 6, "system": 2}


def test_power_draw_entry():
    d = descriptor("power_draw_w")
    assert (d.unit, d.kind, d.category) == ("W", "gauge", "energy")


def test_pcie_tx_is_counter():
    d = descriptor("pcie_tx_bytes")
    assert d.kind == "cumulative_counter" and d.category == "communication"
    assert d.is_counter and math.isinf(d.wrap_range)
    assert d.report_name == "PCIe TX [GB/s]" and d.report_unit == "GB/s"


def test_link_gen_is_count_gauge():
    for mid in ("pcie_link_gen", "pcie_link_width"):
        d = descriptor(mid)
        assert d.kind == "gauge" and d.unit == "count"


def test_ids_are_snake_case():
    for mid in catalog_ids():
        assert mid == mid.lower() and " " not in mid and "." not in mid


def test_select_all():
    assert resolve_selection("all") == frozenset(catalog_ids())


def test_select_energy_category():
    assert resolve_selection("energy") == {"power_draw_w", "temperature_gpu_c", "cpu_power_w", "dram_power_w"}


def test_select_bogus_lists_token():
    with pytest.raises(ValidationError, match="bogus_metric"):
        resolve_selection("bogus_metric")


def test_select_lists_every_unknown():
    with pytest.raises(ValidationError) as exc:
        resolve_selection("power_draw_w,nope1,nope2")
    assert "nope1" in str(exc.value) and "nope2" in str(exc.value)


def test_aliases_resolve_into_catalog():
    ids = set(catalog_ids())
    assert set(ALIASES.values()) <= ids
    assert resolve_selection("tensor_active") == {"tensor_active_pct"}


def test_empty_selection_rejected():
    with pytest.raises(ValidationError):
        resolve_selection(" , ")


tokens = st.sampled_from(catalog_ids() + list(CATEGORIES) + ["all"] + list(ALIASES))


@given(st.lists(tokens, min_size=1, max_size=8))
def test_selection_idempotent(toks):
    once = resolve_selection(",".join(toks))
    assert resolve_selection(once) == once
    assert once <= set(catalog_ids())


def test_device_labels_round_trip():
    assert HOST.label == "host" and gpu(3).label == "gpu3"
    for d in (HOST, gpu(0), gpu(7)):
        assert DeviceId.parse(d.label) == d
    with pytest.raises(ValidationError):
        DeviceId.parse("tpu0")


def test_column_names():
    assert column_name(gpu(0), "power_draw_w") == "g0_power_draw_w"
    assert column_name(HOST, "cpu_usage_pct") == "cpu_usage_pct"
    assert parse_column("g12_sm_clock_mhz") == (gpu(12), "sm_clock_mhz")
    with pytest.raises(ValidationError):
        parse_column("power_draw_w")  # per-GPU metric needs a prefix


def test_schema_order_host_first_then_gpu_blocks():
    cols = schema_columns(catalog_ids(), [HOST, gpu(1), gpu(0)])
    names = [column_name(*c) for c in cols]
    assert names[:4] == ["cpu_power_w", "dram_power_w", "cpu_usage_pct", "dram_usage_pct"]
    assert names[4] == "g0_power_draw_w"
    assert len(names) == 4 + 2 * 22


@given(st.sets(st.sampled_from(catalog_ids()), min_size=1), st.integers(0, 3))
def test_column_names_parse_back(metrics, ngpu):
    for dev, mid in schema_columns(metrics, [HOST] + [gpu(i) for i in range(ngpu)]):
        assert parse_column(column_name(dev, mid)) == (dev, mid)


def test_tick_drops_none_rejects_nan():
    t = Tick(0, 0.0, {(gpu(0), "power_draw_w"): None, (HOST, "cpu_power_w"): 3})
    assert t.values == {(HOST, "cpu_power_w"): 3.0}
    with pytest.raises(ValidationError):
        Tick(0, 0.0, {(HOST, "cpu_power_w"): float("nan")})


def test_sampling_config_validation():
    assert SamplingConfig().interval_s == 0.1
    with pytest.raises(ValidationError):
        SamplingConfig(interval_s=0.01)
    assert SamplingConfig(selected_metrics="memory").selected_metrics == resolve_selection("memory")
