#!/usr/bin/env python3
"""Plot the data files written by photonfb. Usage: plot.py <output directory>"""
import glob
import os
import sys

import matplotlib.pyplot as plt
import numpy as np

out = sys.argv[1] if len(sys.argv) > 1 else "."

traj = os.path.join(out, "trajectory.csv")
if os.path.exists(traj):
    d = np.genfromtxt(traj, delimiter=",", names=True)
    fig, ax = plt.subplots(3, 1, sharex=True)
    ax[0].plot(d["t"], np.cumsum(d["dy"]))
    ax[0].set_ylabel("integrated photocurrent")
    ax[1].plot(d["t"], d["n_est"])
    ax[1].set_ylabel("<n>")
    ax[2].plot(d["t"], d["distance"])
    ax[2].set_ylabel("distance")
    ax[2].set_xlabel("Mt")
    fig.savefig(os.path.join(out, "trajectory.png"))

for path in sorted(glob.glob(os.path.join(out, "q_snapshot_*.txt"))):
    with open(path) as f:
        header = f.readline()
    fields = dict(item.split("=") for item in header[1:].split())
    q = np.loadtxt(path, delimiter=",", comments="#")
    extent = [float(fields[k]) for k in ("x_min", "x_max", "y_min", "y_max")]
    plt.figure()
    plt.imshow(q, origin="lower", extent=extent)
    plt.title(os.path.basename(path))
    plt.savefig(path.replace(".txt", ".png"))

for path in sorted(glob.glob(os.path.join(out, "**", "mean_distance.csv"), recursive=True)):
    d = np.genfromtxt(path, delimiter=",", names=True)
    plt.figure()
    plt.plot(d["t"], d["mean_distance"])
    plt.fill_between(d["t"], d["mean_distance"] - 2 * d["se_distance"], d["mean_distance"] + 2 * d["se_distance"], alpha=0.3)
    plt.xlabel("Mt")
    plt.ylabel("E[D]")
    plt.savefig(path.replace(".csv", ".png"))
