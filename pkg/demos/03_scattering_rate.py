"""
Scattering-limited decay rate from a family of cavities
=======================================================

The on-resonance reflectance of a one-port cavity vanishes when the
input coupling equals the loss rate.  Scanning the input mirror traces
R0 against kappa; fitting that curve recovers the scattering rate and
sorts each cavity into a coupling regime.
"""

from ncfcavity import CavityDesign, r0_on_resonance, sweep_reflection

table = sweep_reflection(CavityDesign(), range(100, 401, 20), 400)
fit = table.kappa_sc_fit
print(f"kappa_sc = {fit.kappa_sc_hz / 1e9:.2f} GHz from {len(table)} cavities ({table.kappa_sc_source})")
print(" N_in  kappa/GHz    R0 (sim)  R0 (model)  regime")
for row in table:
    model = r0_on_resonance(row.kappa_ghz * 1e9 - table.kappa_sc_hz, table.kappa_sc_hz)
    print(f"{row.n_in:5d} {row.kappa_ghz:10.2f} {row.r0:11.2e} {model:11.2e}  {row.regime}")
