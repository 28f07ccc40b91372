"""Hinge-loss SVM: ALO 0-1 risk next to exact leave-one-out.

The hinge loss is not differentiable, so ALO works from the margin set:
observations sitting exactly on the margin.  Their count is printed next to
each estimate.  Agreement is good at large lambda and degrades as the
margin set approaches p, where removing a single point can move several
margin points off the margin.
"""

import numpy as np

from loorisk import GenConfig, ModelSpec, compute_alo, exact_loocv, fit_model, generate

data, _ = generate(GenConfig("logistic_binary", n=60, p=20, k=20, signal_sd=3.0, seed=0))
print(f"{'lambda':>8} {'margin':>6} {'alo err':>8} {'loo err':>8}")
for lam in np.geomspace(100, 0.01, 10):
    spec = ModelSpec("hinge", "ridge", lam)
    fit = fit_model(spec, data)
    alo = compute_alo(spec, data, fit, d="zero_one_sign")
    loo = exact_loocv(spec, data, full_fit=fit, d="zero_one_sign")
    print(f"{lam:8.3g} {alo.active_set_size:6d} {alo.risk * data.n:8.0f} {loo.risk * data.n:8.0f}")
