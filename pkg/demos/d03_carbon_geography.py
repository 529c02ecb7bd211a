"""
Same energy, different grids
============================

Emissions for a fixed amount of energy under a coal-heavy and a
hydro-heavy grid intensity.
"""

from powertrace import estimate_carbon, joules_to_wh

energy_j = 7485.0
print(f"{energy_j:.0f} J = {joules_to_wh(energy_j):.4f} Wh")

# Marginal intensities in g CO2eq per kWh.
grids = {"coal-heavy grid": 495.4, "hydro-heavy grid": 33.7}
grams = {name: estimate_carbon(energy_j, g) * 1000 for name, g in grids.items()}
for name, g in grams.items():
    print(f"{name:<18} {grids[name]:>6.1f} g/kWh -> {g:.2f} g CO2eq")

# Emissions are linear in intensity, so the ratio of emissions is the ratio of intensities.
ratio = grams["coal-heavy grid"] / grams["hydro-heavy grid"]
print(f"ratio {ratio:.1f}x")

# A longer job scales the same way.
for hours in (1, 24, 24 * 7):
    j = 300.0 * 3600 * hours  # a 300 W accelerator
    print(f"{hours:>4} h at 300 W: " + ", ".join(
        f"{name} {estimate_carbon(j, g):.2f} kg" for name, g in grids.items()))
