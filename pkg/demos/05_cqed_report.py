"""
Cavity-QED figures of merit
===========================

Collect the linewidths, finesse, mode length, Purcell factor and the
derived single-emitter coupling of the default design for both
polarisation profiles.
"""

from ncfcavity import CavityDesign, Polarization, cavity_report

for pol in Polarization:
    report = cavity_report(CavityDesign(polarization_profile=pol))
    print(pol.value)
    for key, value in report.to_dict().items():
        print(f"  {key:18s} {value:.6g}")
