"""Regenerates the CLI golden fixture.

Writes subjects.csv, longitudinal.csv and golden_fit.csv next to this file.
The fit is computed from the defining sums with dense loops and a Newton
iteration, independently of the Rust implementation.

    python3 make_golden.py
"""

import csv
import math
import os
from statistics import NormalDist

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
H1, H2 = 0.2, 0.25
GRID_POINTS = 7
ALPHA = 0.05


def make_data(n=80, p=2, seed=20240607):
    rng = np.random.default_rng(seed)
    subjects, rows = [], []
    for i in range(n):
        x = round(float(rng.uniform(0.05, 1.0)), 4)
        d = int(rng.uniform() < 0.75)
        m = int(rng.integers(2, 7))
        times = sorted({round(float(t), 4) for t in rng.uniform(0.0, 1.0, m)})
        sid = f"s{i:03d}"
        subjects.append((sid, x, d))
        for t in times:
            z = [round(float(v), 4) for v in rng.normal(0.0, 1.0, p)]
            rows.append((sid, t, z))
    return subjects, rows


def epan(u):
    return 0.75 * (1.0 - u * u) if abs(u) <= 1.0 else 0.0


def kh(dt, dr):
    return epan(dt / H1) * epan(dr / H2) / (H1 * H2)


class Problem:
    def __init__(self, subjects, rows, p):
        self.n = len(subjects)
        self.tau = max(x for _, x, _ in subjects)
        self.x = {sid: x for sid, x, _ in subjects}
        self.d = {sid: dd for sid, _, dd in subjects}
        self.obs = {sid: [] for sid, _, _ in subjects}
        for sid, t, z in rows:
            self.obs[sid].append((t, np.array(z)))
        self.p = p

    def moments(self, s, t, beta):
        s0, s1, s2 = 0.0, np.zeros(self.p), np.zeros((self.p, self.p))
        for sid, obs in self.obs.items():
            if self.x[sid] < t:
                continue
            for r, z in obs:
                w = kh(t - s, r - s) * math.exp(float(beta @ z)) / self.n
                s0 += w
                s1 += w * z
                s2 += w * np.outer(z, z)
        return s0, s1, s2

    def parts(self, s, beta):
        c = {sid: np.zeros(self.p) for sid in self.obs}
        jac = np.zeros((self.p, self.p))
        for sid, obs in self.obs.items():
            x = self.x[sid]
            if not self.d[sid] or x > self.tau:
                continue
            s0, s1, s2 = self.moments(s, x, beta)
            for r, z in obs:
                w = kh(x - s, r - s)
                if w == 0.0:
                    continue
                zbar = s1 / s0
                c[sid] += w * (z - zbar)
                jac -= w * (s2 / s0 - np.outer(zbar, zbar))
        u = sum(c.values()) / self.n
        return u, jac / self.n, c

    def solve(self, s, beta):
        for _ in range(100):
            u, jac, _ = self.parts(s, beta)
            if np.max(np.abs(u)) < 1e-15:
                break
            beta = beta - np.linalg.solve(jac, u)
        return beta

    def sandwich(self, s, beta):
        _, jac, c = self.parts(s, beta)
        meat = sum(np.outer(v, v) for v in c.values()) / self.n**2
        inv = np.linalg.inv(jac)
        v = inv @ meat @ inv.T
        return 0.5 * (v + v.T)


def fmt(v):
    return f"{v:.6f}"


def main():
    p = 2
    subjects, rows = make_data(p=p)
    with open(os.path.join(HERE, "subjects.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "time", "event"])
        for sid, x, d in subjects:
            w.writerow([sid, f"{x:.4f}", d])
    with open(os.path.join(HERE, "longitudinal.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "obs_time"] + [f"z{k + 1}" for k in range(p)])
        for sid, t, z in rows:
            w.writerow([sid, f"{t:.4f}"] + [f"{v:.4f}" for v in z])

    prob = Problem(
        [(sid, float(f"{x:.4f}"), d) for sid, x, d in subjects],
        [(sid, float(f"{t:.4f}"), [float(f"{v:.4f}") for v in z]) for sid, t, z in rows],
        p,
    )
    h = max(H1, H2)
    lo, hi = h, prob.tau - h
    grid = [lo + (hi - lo) * j / (GRID_POINTS - 1) for j in range(GRID_POINTS)]
    zq = NormalDist().inv_cdf(1.0 - ALPHA / 2.0)
    beta = np.zeros(p)
    with open(os.path.join(HERE, "golden_fit.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        header = ["s"]
        for j in range(1, p + 1):
            header += [f"beta_{j}", f"se_{j}", f"ci_lo_{j}", f"ci_hi_{j}"]
        w.writerow(header)
        for s in grid:
            beta = prob.solve(s, beta)
            cov = prob.sandwich(s, beta)
            row = [fmt(s)]
            for j in range(p):
                se = math.sqrt(max(cov[j, j], 0.0))
                row += [fmt(beta[j]), fmt(se), fmt(beta[j] - zq * se), fmt(beta[j] + zq * se)]
            w.writerow(row)


if __name__ == "__main__":
    main()
