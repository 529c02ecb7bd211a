"""
The metric catalog and selection expressions
============================================

Every metric the toolkit can record, and how a selection string expands.
"""

from collections import Counter

from powertrace import descriptor, metric_catalog, resolve_selection
from powertrace.errors import ValidationError

# The catalog is fixed: 26 metrics in five categories.
catalog = metric_catalog()
print(len(catalog), "metrics")
print(Counter(d.category for d in catalog))

# Each entry carries its unit, kind and the label used in reports.
for d in catalog[:6]:
    print(f"{d.id:<24} {d.kind:<20} {d.device_scope:<8} {d.report_name}")

# Byte counters are cumulative; reports show them as rates.
print(descriptor("pcie_tx_bytes").kind, "->", descriptor("pcie_tx_bytes").report_name)

# Selections mix categories, ids and vendor field names.
print(sorted(resolve_selection("energy")))
print(sorted(resolve_selection("memory,tensor_active_pct")))

# Unknown tokens are all named in one error.
try:
    resolve_selection("energy,not_a_metric,also_bad")
except ValidationError as exc:
    print("rejected:", exc)
