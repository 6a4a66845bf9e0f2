"""
Collection efficiency against input-mirror strength
===================================================

A weak input mirror lets the photon out quickly but gives little Purcell
enhancement over the unguided channel; a strong one enhances more but
hands the photon to the scattering loss.  With loss the efficiency peaks
at an intermediate mirror; without loss it keeps growing.
"""

from ncfcavity import CavityDesign, optimize_one_sided, sweep_n_in

design = CavityDesign()
lossy = sweep_n_in(design, range(60, 221, 20), 400)
lossless = sweep_n_in(design, range(60, 221, 20), 400, lossless=True)
print(" N_in  Purcell   eta   eta (lossless)")
for a, b in zip(lossy, lossless):
    print(f"{a.n_in:5d} {a.purcell:8.2f} {a.eta:6.3f} {b.eta:8.3f}")

best = optimize_one_sided(design, range(110, 171, 10), [400])
print(f"best over N_in 110..170: N_in={best.row.n_in}, eta={best.row.eta:.3f}, Purcell={best.row.purcell:.2f}")
