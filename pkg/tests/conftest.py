"""Session-wide fixtures: the nominal microgrid case with its seed-7
data pack and model-based oracle, shared across test modules."""

from types import SimpleNamespace

import numpy as np
import pytest

from ddlqi import data, linalg, models, protocol


@pytest.fixture(scope="session")
def dgu_case():
    """Nominal plant, demo weights, the seed-7 integral-variant pack and
    the Riccati oracle gain/cost."""
    model = protocol.nominal_dgu()
    weights = protocol.dgu_weights()
    rng = np.random.default_rng(7)
    excitation = data.random_excitation(model.m, 1.0, 0.02, 100.0, rng)
    batch = data.collect_integral_data(model, excitation, 0.1, 0.1)
    pack = data.build_covariances(batch)
    aug = models.augment(model)
    p_opt, k_care = linalg.solve_care(aug.a, aug.b,
                                      weights.augmented_state_weight(),
                                      weights.r)
    return SimpleNamespace(model=model, weights=weights, aug=aug,
                           excitation=excitation, batch=batch, pack=pack,
                           k_care=k_care, trace_p=float(np.trace(p_opt)))
