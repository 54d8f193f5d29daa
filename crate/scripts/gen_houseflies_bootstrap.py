"""Bootstrap parameter sample for the house-flies continuation-ratio model.

Resamples the seven-dose emergence data (500 pupae per dose) by multinomial
draws and refits both continuation-ratio equations. For a non-proportional
continuation-ratio model the likelihood factors into two binomial logistic
regressions: unopened vs opened (quadratic in dose) and died vs emerged among
the opened (linear in dose).

Writes a CSV with header b11,b12,b13,b21,b22 and one row per replicate.
"""

import argparse
import csv

import numpy as np

DOSES = np.array([80.0, 100.0, 120.0, 140.0, 160.0, 180.0, 200.0])
COUNTS = np.array(
    [
        [62, 5, 433],
        [94, 24, 382],
        [179, 60, 261],
        [335, 80, 85],
        [432, 46, 22],
        [487, 11, 2],
        [498, 2, 0],
    ],
    dtype=float,
)


def logistic_fit(X, successes, trials, iters=100):
    """Binomial logistic regression by IRLS on standardized columns."""
    keep = trials > 0
    X, successes, trials = X[keep], successes[keep], trials[keep]
    mu_x = X[:, 1:].mean(axis=0)
    sd_x = X[:, 1:].std(axis=0)
    Z = np.column_stack([np.ones(len(X)), (X[:, 1:] - mu_x) / sd_x])
    beta = np.zeros(Z.shape[1])
    for _ in range(iters):
        eta = Z @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        w = trials * p * (1.0 - p)
        grad = Z.T @ (successes - trials * p)
        hess = Z.T @ (Z * w[:, None])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    slopes = beta[1:] / sd_x
    intercept = beta[0] - np.sum(slopes * mu_x)
    return np.concatenate([[intercept], slopes])


def fit(counts):
    y1, y2, y3 = counts[:, 0], counts[:, 1], counts[:, 2]
    n = counts.sum(axis=1)
    x = DOSES
    eq1 = logistic_fit(np.column_stack([np.ones_like(x), x, x * x]), y1, n)
    eq2 = logistic_fit(np.column_stack([np.ones_like(x), x]), y2, y2 + y3)
    return np.concatenate([eq1, eq2])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    probs = COUNTS / COUNTS.sum(axis=1, keepdims=True)
    rows = []
    for _ in range(args.replicates):
        draw = np.array([rng.multinomial(500, p) for p in probs], dtype=float)
        rows.append(fit(draw))

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b11", "b12", "b13", "b21", "b22"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    print("original-data fit:", fit(COUNTS))


if __name__ == "__main__":
    main()
