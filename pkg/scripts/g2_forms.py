"""Tabulate the derived and the widely printed cross-correlation forms against storage time."""

import numpy as np

from cavqi.config import load_config
from cavqi.memory_model import analytic_g2, printed_g2, retrieval_efficiency


def main():
    p = load_config("paper-defaults").physics
    print(f"{'t_us':>6} {'R(t)':>8} {'derived':>9} {'printed':>9} {'(printed-1)/chi':>16}")
    for t in np.arange(0.0, 900.0, 100.0):
        d, q = analytic_g2(p, t), printed_g2(p, t)
        print(f"{t:6.0f} {retrieval_efficiency(t, p.decay):8.4f} {d:9.3f} {q:9.4f} {(q - 1) / p.chi + 1:16.3f}")


if __name__ == "__main__":
    main()
