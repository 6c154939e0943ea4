import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def micro_hybrid_config(**overrides):
    """Small hybrid model used across gradient and equivalence tests."""
    from qpinn.network import ModelConfig
    base = dict(variant="hybrid", hidden_width=6, rff_features=5, n_qubits=3,
                n_layers_pqc=2, ansatz="strongly", scale="acos", seed=3,
                t_domain=1.5)
    base.update(overrides)
    return ModelConfig(**base)
