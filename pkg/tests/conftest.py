import numpy as np
import pytest

from prnukit.preprocess import ResidualPair
from prnukit.simulate import TransferSpec, smooth_scene, transfer_derivative


def inject_pairs(spec, sigma_k, count, side=128, scene_seed=42, prnu_seed=0, noise=0.0):
    """Residual pairs written directly from the capture model: the gain
    curve times the fingerprint, with the exact brightness covariate."""
    rng = np.random.default_rng(prnu_seed)
    k = rng.standard_normal((side, side))
    pairs = []
    for i in range(count):
        z = smooth_scene(scene_seed, side, side, index=i)
        x = spec(z)
        gain = z * transfer_derivative(spec, z)
        residual = gain * sigma_k * k
        if noise > 0:
            residual = residual + noise * np.random.default_rng((prnu_seed, i)).standard_normal(x.shape)
        pairs.append(ResidualPair(residual, x))
    return pairs, k


@pytest.fixture(scope="session")
def smoothstep_pairs():
    """40 noiseless injected pairs under a smoothstep transfer, sigma_k=0.05."""
    pairs, k = inject_pairs(TransferSpec.smoothstep(), 0.05, 40, side=128)
    return pairs, k, 0.05
