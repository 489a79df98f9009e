"""Path-length spread of the 12 arms when single spacings are detuned.

The ideal layout gives a spread at machine precision.  Detuning a
collimated arm changes all arms alike; detuning a lens-to-focus distance
breaks the imaging condition and separates the arms.
"""

import argparse

from cavqi.mode_array import CavityGeometry, FreeSpace, check_path_equality, default_trace_elements, launch_rays


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--detune", type=float, default=0.01, help="fractional length change")
    args = ap.parse_args()

    geom = CavityGeometry()
    base = default_trace_elements(geom)
    rays = launch_rays(geom)
    print(f"ideal: spread {check_path_equality(base, rays).max_relative_spread:.2e}")
    for i, element in enumerate(base):
        if not isinstance(element, FreeSpace):
            continue
        elements = list(base)
        elements[i] = FreeSpace(element.length * (1 + args.detune))
        report = check_path_equality(elements, rays)
        print(f"element {i:2d} (FreeSpace {element.length:.3f} m) x{1 + args.detune:.3f}: "
              f"spread {report.max_relative_spread:.2e}  {'PASS' if report.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
