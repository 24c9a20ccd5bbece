"""Walkthrough of the linear counterexample where surrogate maximization fails.

A three-class linear classifier, the point x = (0, -1) with true class 0, and
an l2 budget of 0.8.  Maximizing cross-entropy moves straight up to (0, 0.8)
and never flips the prediction; maximizing the margin toward either wrong
class reaches a diagonal corner of the ball and misclassifies.
"""

import numpy as np

from marginlab import (AttackConfig, beta_attack, closed_form_linear_attack,
                       forward_logits, grid_max_cross_entropy, linear_model,
                       pgd_surrogate)

WEIGHT = np.array([[0.0, -1.0, 1.0], [-1.0, 0.0, 0.0]])
BIAS = np.zeros(3)
X = np.array([0.0, -1.0])
Y, EPS = 0, 0.8

spec, params = linear_model(WEIGHT, BIAS)
print("clean logits:", forward_logits(spec, params, X).data[0])

eta_ce, ce_val = grid_max_cross_entropy(spec, params, X, Y, EPS, 200,
                                        norm="l2", box=False)
logits = forward_logits(spec, params, X + eta_ce).data[0]
print(f"\nexact surrogate maximizer (fine grid): eta={np.round(eta_ce, 3)}")
print(f"  logits {np.round(logits, 3)} -> still classified correctly")

cfg = AttackConfig(epsilon=EPS, norm="l2", steps=500, optimizer="sgd",
                   step_size=0.5, box=False, seed=0)
res = pgd_surrogate(spec, params, X, Y, cfg)
print(f"iterative surrogate ascent: eta={np.round(res.eta_star, 3)}, "
      f"success={res.success}")

closed = closed_form_linear_attack(WEIGHT, BIAS, X, Y, EPS, "l2")
print(f"\nclosed-form margin optimum: margin={closed.margin_value:.5f} "
      f"(= 0.8*sqrt(2) - 1)")

res = beta_attack(spec, params, X, Y,
                  AttackConfig(epsilon=EPS, norm="l2", steps=50,
                               optimizer="rmsprop", box=False, seed=0))
logits = forward_logits(spec, params, X + res.eta_star).data[0]
print(f"best-target margin ascent: eta={np.round(res.eta_star, 3)}, "
      f"margin={res.margin_value:.5f}, success={res.success}")
print(f"  logits {np.round(logits, 3)} -> misclassified")
