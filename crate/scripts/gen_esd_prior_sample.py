"""Parameter draws from the ESD uniform prior box, reproducing R's stream.

Implements R's default generator (Mersenne-Twister, `set.seed` scrambling,
`runif`) so that

    set.seed(713)
    b_0 = runif(n, -8, -7); b_1 = runif(n, 1, 2); b_2 = runif(n, -0.3, -0.1)
    b_3 = runif(n, -0.3, 0); b_4 = runif(n, 0.1, 0.4); b_5 = runif(n, 0.25, 0.45)
    b_34 = runif(n, 0.35, 0.45)
    cbind(b_5, b_1, b_2, b_3, b_4, b_34, b_0)

is regenerated bit for bit. Columns follow the coefficient order of the
formula `Vol + LotA + LotB + ESD + Pulse + ESD*Pulse + 1`.
"""

import argparse
import csv

N, M = 624, 397
MASK = 0xFFFFFFFF


class RMersenneTwister:
    def __init__(self, seed):
        seed &= MASK
        for _ in range(50):
            seed = (69069 * seed + 1) & MASK
        state = []
        for _ in range(N + 1):
            seed = (69069 * seed + 1) & MASK
            state.append(seed)
        # state[0] is R's position slot; set.seed forces a full regeneration
        self.mt = state[1:]
        self.mti = N

    def _next32(self):
        mt = self.mt
        if self.mti >= N:
            for kk in range(N):
                y = (mt[kk] & 0x80000000) | (mt[(kk + 1) % N] & 0x7FFFFFFF)
                mt[kk] = mt[(kk + M) % N] ^ (y >> 1) ^ (0x9908B0DF if y & 1 else 0)
            self.mti = 0
        y = mt[self.mti]
        self.mti += 1
        y ^= y >> 11
        y ^= (y << 7) & 0x9D2C5680
        y ^= (y << 15) & 0xEFC60000
        y ^= y >> 18
        return y & MASK

    def unif(self):
        v = self._next32() * 2.3283064365386963e-10
        i2_32m1 = 2.328306437080797e-10
        if v <= 0.0:
            return 0.5 * i2_32m1
        if 1.0 - v <= 0.0:
            return 1.0 - 0.5 * i2_32m1
        return v

    def runif(self, n, a, b):
        return [a + (b - a) * self.unif() for _ in range(n)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--draws", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=713)
    ap.add_argument("--out")
    ap.add_argument("--self-test", action="store_true")
    args = ap.parse_args()
    if args.self_test:
        for seed, first in [(1, 0.2655087), (42, 0.914806), (123, 0.2875775)]:
            got = RMersenneTwister(seed).unif()
            print(seed, got, "ok" if abs(got - first) < 5e-7 else "MISMATCH")
        return
    g = RMersenneTwister(args.seed)
    n = args.draws
    b_0 = g.runif(n, -8, -7)
    b_1 = g.runif(n, 1, 2)
    b_2 = g.runif(n, -0.3, -0.1)
    b_3 = g.runif(n, -0.3, 0)
    b_4 = g.runif(n, 0.1, 0.4)
    b_5 = g.runif(n, 0.25, 0.45)
    b_34 = g.runif(n, 0.35, 0.45)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["b_5", "b_1", "b_2", "b_3", "b_4", "b_34", "b_0"])
        for row in zip(b_5, b_1, b_2, b_3, b_4, b_34, b_0):
            w.writerow([repr(v) for v in row])


if __name__ == "__main__":
    main()
