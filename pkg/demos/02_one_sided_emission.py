"""
Emission of a dipole at the defect centre
=========================================

Compare how an emitter shares its power between the two ports, first for
a symmetric lossless cavity and then for the default one-sided design.
The closed-form result is cross-checked against a direct Helmholtz solve.
"""

from ncfcavity import CavityDesign, build_stack, effective_indices, emit, helmholtz_oracle, resonant_emission
from ncfcavity.cqed import resonance_window

# symmetric and lossless: half of the guided power goes each way
sym = CavityDesign(n_slats_input=150, n_slats_output=150)
p0 = effective_indices(sym).lossless()
wl, em = resonant_emission(build_stack(sym, p0), *resonance_window(sym, p0))
print(f"symmetric lossless: lambda0 {wl:.4f} nm, Purcell {em.purcell:.1f}, eta_left {em.eta_left:.3f}")

# the default design has a much stronger output mirror
design = CavityDesign()
profile = effective_indices(design)
stack = build_stack(design, profile)
wl, em = resonant_emission(stack, *resonance_window(design, profile), profile.unguided_ratio)
print(f"default: lambda0 {wl:.4f} nm, Purcell {em.purcell:.2f}")
print(f"  eta_left {em.eta_left:.3f}, eta_right {em.eta_right:.2e}")

# independent check on a short cavity (the oracle meshes every layer)
short = design.replace(n_slats_input=30, n_slats_output=60)
s_stack = build_stack(short, profile)
wl, _ = resonant_emission(s_stack, *resonance_window(short, profile))
a, b = emit(s_stack, wl), helmholtz_oracle(s_stack, wl)
print(f"N_in=30, N_out=60 at {wl:.4f} nm: closed form F={a.purcell:.5f} eta={a.eta_left:.5f}")
print(f"                          Helmholtz F={b.purcell:.5f} eta={b.eta_left:.5f}")
