#!/usr/bin/env python3
"""Writes config/default.json: synthetic three-river hydrology, reservoir
curves, release table, routing and solver settings.

The Hanoi rating scale is calibrated by Monte Carlo so that the
unregulated total flow exceeds the flood threshold about
`--flood-days` days per year."""

import argparse
import json
from pathlib import Path

import numpy as np

DAYS = 365
DT = 86400.0
S_MIN, S_MAX = 3.8e9, 9.9e9
H_BAR = 950.0


def seasonal(base, amp, peak=200.0, width=45.0):
    d = np.arange(DAYS)
    dist = np.minimum(np.abs(d - peak), DAYS - np.abs(d - peak))
    return base + amp * np.exp(-0.5 * (dist / width) ** 2)


def sigma_curve(dry=0.25, wet=0.45, peak=200.0, width=60.0):
    d = np.arange(DAYS)
    dist = np.minimum(np.abs(d - peak), DAYS - np.abs(d - peak))
    return dry + (wet - dry) * np.exp(-0.5 * (dist / width) ** 2)


def hydrology(seed):
    medians = [seasonal(600, 5000), seasonal(300, 2200, peak=205), seasonal(350, 2500, peak=195)]
    sig = sigma_curve()
    return {
        "mu": {k: np.log(m).tolist() for k, m in zip(["da", "thao", "lo"], medians)},
        "sigma": {k: sig.tolist() for k in ["da", "thao", "lo"]},
        "rho_time": 0.9,
        "R": [[1.0, 0.7, 0.6], [0.7, 1.0, 0.65], [0.6, 0.65, 1.0]],
        "seed": seed,
    }


def simulate_flows(h, years, rng):
    mu = np.array([h["mu"][k] for k in ["da", "thao", "lo"]])
    sig = np.array([h["sigma"][k] for k in ["da", "thao", "lo"]])
    chol = np.linalg.cholesky(np.array(h["R"]))
    rho = h["rho_time"]
    n = years * DAYS
    z = chol @ rng.standard_normal(3)
    out = np.empty((3, n))
    for t in range(n):
        if t:
            z = rho * z + np.sqrt(1 - rho * rho) * (chol @ rng.standard_normal(3))
        d = t % DAYS
        out[:, t] = np.exp(mu[:, d] + sig[:, d] * z)
    return out


def cap(s):
    frac = np.clip((s - S_MIN) / (S_MAX - S_MIN), 0.0, None)
    return 2400.0 + 12000.0 * frac ** 1.5


def release_table(env=200.0, ramp=0.5e9):
    storage = np.arange(3.0e9, 10.5e9 + 1, 0.25e9)
    inflow = np.concatenate([np.arange(0, 5000, 250), np.arange(5000, 15000, 500), np.arange(15000, 40001, 1000)])
    r_min = np.empty((storage.size, inflow.size))
    r_max = np.empty_like(r_min)
    for i, s in enumerate(storage):
        for j, q in enumerate(inflow):
            # Environmental flow ramps up from zero at s_min; the overflow
            # term is the uncontrolled spill of a full reservoir.
            env_flow = env * np.clip((s - S_MIN) / ramp, 0.0, 1.0)
            lo = max(env_flow, q - (S_MAX - s) / DT)
            # Spillway plus inflow passthrough, but no deeper than s_min.
            avail = max(q + (s - S_MIN) / DT, 0.0)
            r_min[i, j] = lo
            r_max[i, j] = max(lo, min(cap(s) + q, avail))
    return {
        "storage": storage.tolist(),
        "inflow": inflow.astype(float).tolist(),
        "r_min": r_min.tolist(),
        "r_max": r_max.tolist(),
    }


def control_nodes():
    dense = np.arange(0.0, 2400.0 + 1, 150.0)
    coarse = [3000, 4000, 5000, 6500, 8000, 10000, 12500, 15000, 20000]
    return dense.tolist() + [float(c) for c in coarse]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "config" / "default.json"))
    ap.add_argument("--seed", type=int, default=20240517)
    ap.add_argument("--flood-days", type=float, default=8.0)
    ap.add_argument("--years", type=int, default=200)
    args = ap.parse_args()

    hyd = hydrology(args.seed)
    flows = simulate_flows(hyd, args.years, np.random.default_rng(args.seed))
    total = flows.sum(axis=0)
    q99 = float(np.quantile(flows[0], 0.99))
    exponent = 0.5
    q_flood = np.quantile(total, 1.0 - args.flood_days / DAYS)
    scale = H_BAR / q_flood ** exponent

    d = np.arange(DAYS)
    wet = 0.15 * np.exp(-0.5 * (np.minimum(np.abs(d - 200), DAYS - np.abs(d - 200)) / 50.0) ** 2)

    cfg = {
        "hydrology": hyd,
        "reservoir": {
            "s_min": S_MIN,
            "s_max": S_MAX,
            "initial_storage": 6.5e9,
            "q_turb_max": 2400.0,
            "eta": 0.88,
            "seconds_per_step": DT,
            "release_table": release_table(),
            "level_of_storage": {
                "storage": [0.0, 3.8e9, 5.0e9, 6.5e9, 8.0e9, 9.9e9, 12.0e9],
                "level": [30.0, 80.0, 90.0, 100.0, 108.0, 117.0, 125.0],
            },
            "tailwater_of_release": {
                "release": [0.0, 2000.0, 5000.0, 10000.0, 20000.0, 40000.0],
                "level": [10.0, 13.0, 16.0, 20.0, 26.0, 33.0],
            },
        },
        "routing": {"lag": 1, "attenuation": 0.2, "rating_scale": float(scale), "rating_exponent": exponent},
        "objectives": {"h_bar": H_BAR, "energy_unit": 1e6},
        "inner_loop": {
            "scaling": {"storage": S_MAX, "flow": round(q99, 1)},
            "reference_model": {"num": [0.0, 0.2], "den": [1.0, -0.8]},
            "anti_windup": True,
            "pid_source": "vrft",
            "vrft_alpha": 0.05,
        },
        "empc": {
            "horizon": 15,
            "alpha": 0.05,
            "forecast": "oracle",
            "feasibility_tol": 1e-6,
            "sref_margin": 1.0,
            "solver": {
                "max_iterations": 3000,
                "penalty_weights": [1e2, 1e4, 1e6],
                "step_tolerance": 1e-4,
                "restarts": 4,
                "scan_points": 9,
            },
        },
        "sweep": {
            "alphas": [0, 0.05, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95, 1],
            "horizons": [10, 15, 20],
            "train_years": 8,
            "validation_years": 2,
            "ensemble_size": 10,
            "validation_seed_offset": 1,
            "validation_mu_delta": {"da": wet.tolist(), "thao": wet.tolist(), "lo": wet.tolist()},
        },
        "dp": {
            "storage_nodes": 100,
            "control": control_nodes(),
            "max_sweeps": 200,
            "relative_tol": 1e-6,
        },
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(cfg, indent=1) + "\n")
    print(f"wrote {args.out}: rating_scale={scale:.6g} (flood flow {q_flood:.0f} m3/s), flow scale {q99:.0f}")


if __name__ == "__main__":
    main()
