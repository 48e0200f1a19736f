"""Smoke test for the adalie_py extension module.

Build the module first, for example:

    cargo build --release -p adalie-py --features extension-module
    cp target/release/libadalie_py.so python/adalie_py.so
    python3 python/smoke_test.py
"""

import math
import sys

import adalie_py as ad


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok: {msg}")


def main():
    sys_ = ad.LtvSystem.builtin("spring-mass", 40)
    check((sys_.n_x, sys_.n_u, sys_.n_y, sys_.horizon) == (2, 1, 2, 40), repr(sys_))

    # Constant input without noise is recovered exactly.
    ep = ad.simulate(sys_, [[0.7]] * 40)
    est = ad.estimate(sys_, ep, ratio=1.0)
    worst = max(abs(u[0] - 0.7) for u in est.estimates)
    check(worst < 1e-6, f"constant input recovered (max error {worst:.2e})")
    check(all(abs(sum(w) - 1.0) < 1e-9 and min(w) >= 0 for w in est.weights), "weights on the simplex")

    umv = ad.umv_estimate(sys_, ep, 0.0)
    check(max(abs(u[0] - 0.7) for u in umv) < 1e-6, "baseline exact without noise")

    p = ad.project_simplex([0.5, 2.0, -1.0])
    check(abs(sum(p) - 1.0) < 1e-12 and p == [0.0, 1.0, 0.0], f"projection {p}")

    v = ad.noise_variance_constant(0.2, 0.1)
    check(abs(v - 36 * 0.04 * (1 + math.sqrt(math.log(10))) ** 2) < 1e-12, "variance constant")
    check(abs(ad.expert_control(0.0, 1.0) - 8.0) < 1e-12, "expert control")

    email = ad.LtvSystem([[0.43]], [[0.47]], [[1.0]], 20)
    noisy = ad.simulate(email, [[1.0]] * 20, noise_bound=0.1, seed=3)
    check(len(ad.estimate(email, noisy).bounds) == 20, "bounds per step")

    rows = ad.run_bench(
        'systems = ["email-server"]\nepisodes = 2\ncv_episodes = 1\nhorizon = 20\n'
        'ratio_grid = [0.1, 1.0]\n[[signals]]\nkind = "step"\n'
    )
    check(len(rows) == 1 and rows[0][0] == "email-server", f"bench row {rows[0]}")

    lfo = ad.run_lfo("demos = 2\ndemo_duration = 2.0\neval_duration = 2.0\n")
    check([r[0] for r in lfo] == ["expert", "adal-ie", "umv-ie"], "lfo summary rows")

    try:
        ad.LtvSystem([[1.0]], [[1.0]], [[1.0, 2.0], [3.0]], 5)
    except ValueError:
        check(True, "ragged matrix rejected")
    print("all checks passed")


if __name__ == "__main__":
    main()
