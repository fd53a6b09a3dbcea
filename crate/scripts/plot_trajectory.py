"""Plot a trajectory CSV written by `hssd simulate`.

usage: python3 scripts/plot_trajectory.py out/trajectory.csv [energy.png]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main() -> None:
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    df = pd.read_csv(sys.argv[1])
    out = sys.argv[2] if len(sys.argv) > 2 else "energy.png"
    fig, (ax_h, ax_e) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for col in [c for c in df.columns if c.startswith("h")]:
        ax_h.plot(df["step"], df[col], label=col)
    ax_h.set_ylabel("position")
    ax_h.legend(loc="upper right")
    ax_e.plot(df["step"], df["H"] - df["H"].iloc[0])
    ax_e.set_ylabel("H - H0")
    ax_e.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
