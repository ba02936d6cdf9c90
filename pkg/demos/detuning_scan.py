"""Extra phase of the retrieved pulse as the one-photon detuning grows.

Runs the desk scenario at five detunings on the EIT side of the line and
prints the largest |phi_EIT| reached within the reporting window, plus a
coarse view of each phi_EIT(t) curve.

    python demos/detuning_scan.py
"""

import numpy as np

from eitstore import load_preset, run_detuning_scan

DELTAS_HZ = [0.2e9, 0.6e9, 1.0e9, 1.3e9, 1.7e9]


def main():
    base = load_preset("eit-desk")
    table = run_detuning_scan(base, DELTAS_HZ)
    print("detuning   max|phi_EIT| (rad)")
    for d, peak in zip(DELTAS_HZ, table.max_abs()):
        print(f"{d / 1e9:5.1f} GHz  {peak:8.3f}")

    # phi_EIT sampled every 100 ns after the coupling comes back on
    t = table.t
    marks = np.arange(0.1e-6, 1.01e-6, 0.1e-6)
    print("\n t (us) " + "".join(f"{lab[8:]:>9}" for lab in table.labels))
    for tm in marks:
        i = int(np.argmin(np.abs(t - tm)))
        row = "".join(f"{v[i]:9.3f}" for v in table.values)
        print(f"{t[i] * 1e6:6.2f}  {row}")


if __name__ == "__main__":
    main()
