"""Proper scoring rules at the level of one neuron.

Draws a small random world, compares the weights each regularizer predicts
with a brute-force search of the expected score, then shows gradient ascent
getting stuck on an instance built to violate the no-surprises assumption.

    python3 demos/scoring_rules.py
"""

import numpy as np

from neuromarket.properness import (
    adversarial_distribution,
    brute_force_argmax,
    check_assumption1_all,
    expected_score,
    gamma_T,
    gradient_ascent,
    random_distribution,
    snap_to_kink,
)
from neuromarket.scoring import Regularizer, ScoringConfig


def main():
    rng = np.random.default_rng(7)
    P = random_distribution(rng, 5, 3)
    print("outcomes (x, mu, p):")
    for x, mu, p in zip(P.states, P.utilities, P.probs):
        print(f"  {x}  mu={mu:+.2f}  p={p:.2f}")
    for reg in Regularizer:
        cfg = ScoringConfig(reg, eta=2.0 if reg is Regularizer.L1 else 1.0)
        predicted = gamma_T(P, cfg)
        found = brute_force_argmax(P, cfg, selective=False)
        print(f"{reg.value:>3}: predicted {np.round(predicted, 3)}  brute force {np.round(found, 3)}  "
              f"scores {expected_score(P, predicted, cfg, False):.4f} / {expected_score(P, found, cfg, False):.4f}")

    P, cfg, w0 = adversarial_distribution(np.random.default_rng(1))
    run = gradient_ascent(P, cfg, w0, lr=0.01, n_iter=20_000)
    i = int(np.argmax(run.flips))
    kink = snap_to_kink(P, run.weights, cfg.theta, i)
    held = all(r.holds for r in check_assumption1_all(P, cfg, kink))
    print(f"adversarial: {run.sign_flips} sign flips at the end of ascent, "
          f"synapse {i} oscillates; assumption holds at the kink: {held}")


if __name__ == "__main__":
    main()
