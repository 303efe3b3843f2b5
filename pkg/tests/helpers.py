"""Shared generators and frozen oracle values for the test suite.

Randomized tests draw from explicit ``numpy.random.default_rng`` seeds
so every run is reproducible; the generators here implement the data
hygiene used throughout (spectral-abscissa cap on random plants,
persistency-of-excitation gate with a conditioning bound) so that test
failures indicate real regressions rather than degenerate draws.
"""

import numpy as np

from ddlqi import data, linalg, models

# Riccati oracle for the nominal microgrid plant under the demo weights
# (unit state/input cost, integrator weight 100), computed independently
# and frozen here to pin regressions in either the model-based solver or
# the data-driven routes.
K_CARE_DGU = np.array([[0.40930902429908905, 1.1633114275902545, -10.0]])
TRACE_P_DGU = 14.37149817792076


def random_plant(rng, n=None, m=None, p=1, abscissa_cap=0.3):
    """Random dense plant with the open-loop abscissa capped.

    Strongly unstable draws make the quadrature of random trajectories
    overflow long before any solver is exercised, so the cap keeps the
    instances numerically meaningful without making them all stable.
    """
    if n is None:
        n = int(rng.integers(2, 5))
    if m is None:
        m = int(rng.integers(1, 3))
    a = rng.normal(size=(n, n))
    absc = linalg.spectral_abscissa(a)
    if absc > abscissa_cap:
        a = a - (absc - abscissa_cap) * np.eye(n)
    b = rng.normal(size=(n, m))
    c = rng.normal(size=(p, n))
    return models.LtiModel(a, b, c)


def admissible_plant(rng, **kwargs):
    """Random plant passing the structural preflight checks."""
    while True:
        model = random_plant(rng, **kwargs)
        probe = models.WeightSpec(np.eye(model.n), np.eye(model.p),
                                  np.eye(model.m))
        if (models.check_aug_stabilizable(model).ok
                and models.check_aug_detectable(model, probe).ok):
            return model


def unit_weights(model, qz=10.0):
    return models.WeightSpec(qx=np.eye(model.n), qz=qz * np.eye(model.p),
                             r=np.eye(model.m))


def excite_and_pack(model, rng, variant="derivative", duration=4.0,
                    hold=0.05, amplitude=2.0, interval=0.05, window=0.05,
                    max_condition=1e4):
    """Collect a covariance pack, or ``None`` when the excitation gate
    (full rank and bounded conditioning) fails for this draw."""
    excitation = data.random_excitation(model.m, duration, hold, amplitude,
                                        rng)
    if variant == "derivative":
        batch = data.collect_derivative_data(model, excitation, interval)
    else:
        batch = data.collect_integral_data(model, excitation, interval,
                                           window)
    pack = data.build_covariances(batch)
    report = data.check_pe_rank(pack)
    if not (report.ok and report.condition <= max_condition):
        return None
    return pack


def gated_suite(rng, count, variant="derivative", **plant_kwargs):
    """Yield ``count`` triples (model, weights, pack) passing every gate."""
    produced = 0
    while produced < count:
        model = admissible_plant(rng, **plant_kwargs)
        pack = excite_and_pack(model, rng, variant=variant)
        if pack is None:
            continue
        yield model, unit_weights(model), pack
        produced += 1


def random_stabilizing_aug_gain(rng, model, spread=0.3):
    """Random gain stabilizing the integral-augmented plant, built by
    perturbing a constructive stabilizer until the loop stays Hurwitz."""
    aug = models.augment(model)
    base = linalg.stabilizing_gain(aug.a, aug.b)
    for _ in range(50):
        gain = base + spread * rng.normal(size=base.shape)
        if linalg.is_hurwitz(aug.a - aug.b @ gain):
            return gain
    return base


def random_hurwitz(rng, max_dim=8):
    """Random Hurwitz matrix of dimension 1..max_dim."""
    n = int(rng.integers(1, max_dim + 1))
    a = rng.normal(size=(n, n))
    absc = linalg.spectral_abscissa(a)
    return a - (absc + 0.1 + rng.uniform(0.0, 1.0)) * np.eye(n)
