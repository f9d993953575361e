import numpy as np
import pytest

from _helpers import crandn, random_problem, rel_err
from ctf_mnmf.estimator import DegeneracyError
from ctf_mnmf.model import NmfFactors
from ctf_mnmf.stft import forward_stft, inverse_stft
from ctf_mnmf.wiener import (
    delayed_psd_matrix,
    images_to_signals,
    reconstruct_images,
    wiener_gains,
)


def _direct_images(W, f, x, taps):
    """Textbook filter with an explicit mixture covariance inverse."""
    H = np.linalg.inv(W)
    lam = delayed_psd_matrix(f, taps)
    I, J, M = x.shape
    out = np.zeros((len(taps), I, J, M), dtype=complex)
    for i in range(I):
        for j in range(J):
            R = H[i] @ np.diag(lam[i, j]) @ H[i].conj().T
            start = 0
            for n, t in enumerate(taps):
                Hn = H[i][:, start : start + t]
                Rn = Hn @ np.diag(lam[i, j, start : start + t]) @ Hn.conj().T
                out[n, i, j] = Rn @ np.linalg.solve(R, x[i, j])
                start += t
    return out


@pytest.mark.parametrize("taps", [[2, 2], [1, 3], [1, 1, 2]])
def test_images_match_textbook_filter(rng, taps):
    x, W, f = random_problem(rng, 3, 6, taps)
    assert rel_err(reconstruct_images(W, f, x, taps), _direct_images(W, f, x, taps)) < 1e-10


@pytest.mark.parametrize("taps", [[2, 2], [3, 1], [1, 1]])
def test_images_partition_the_mixture(rng, taps):
    x, W, f = random_problem(rng, 5, 12, taps)
    images = reconstruct_images(W, f, x, taps)
    err = np.abs(images.sum(axis=0) - x) / np.abs(x)
    assert err.max() < 1e-10


def test_single_source_returns_the_mixture(rng):
    x, W, f = random_problem(rng, 4, 8, [3])
    images = reconstruct_images(W, f, x, [3])
    np.testing.assert_array_equal(images.shape, (1, 4, 8, 3))
    assert rel_err(images[0], x) < 1e-12


def test_gains_sum_to_identity_and_are_projections(rng):
    taps = [2, 2]
    x, W, f = random_problem(rng, 3, 5, taps)
    G = wiener_gains(W, f, taps, j=2)
    assert G.shape == (2, 3, 4, 4)
    np.testing.assert_allclose(G.sum(axis=0), np.broadcast_to(np.eye(4), (3, 4, 4)), atol=1e-10)
    # with a square W each gain reduces to H P_n W, whose eigenvalues are 0 or 1
    for n, rows in enumerate([slice(0, 2), slice(2, 4)]):
        for i in range(3):
            np.testing.assert_allclose(G[n, i] @ G[n, i], G[n, i], atol=1e-10)
            ev = np.sort(np.abs(np.linalg.eigvals(G[n, i])))
            np.testing.assert_allclose(ev, [0, 0, 1, 1], atol=1e-8)
    images = reconstruct_images(W, f, x, taps)
    np.testing.assert_allclose(images[:, :, 2], np.einsum("nimk,ik->nim", G, x[:, 2]), atol=1e-10)


def test_delayed_psd_matrix_clamps(rng):
    _, _, f = random_problem(rng, 2, 4, [2, 1])
    lam = delayed_psd_matrix(f, [2, 1])
    p0 = f.psd(0)
    np.testing.assert_allclose(lam[:, 0, 1], p0[:, 0])
    np.testing.assert_allclose(lam[:, 3, 1], p0[:, 2])
    np.testing.assert_allclose(lam[:, :, 2], f.psd(1))


def test_singular_demixing_is_reported(rng):
    x, W, f = random_problem(rng, 2, 3, [1, 1])
    W[1] = 0
    with pytest.raises(DegeneracyError):
        reconstruct_images(W, f, x, [1, 1])


def test_images_to_signals_delegates_to_inverse_stft(rng):
    sig = rng.standard_normal((2, 900))
    spec = forward_stft(sig, 64)
    images = np.stack([spec.bins, 2 * spec.bins])
    out = images_to_signals(images, 64, 16, spec.sample_rate, 900)
    np.testing.assert_allclose(out[0].samples, sig, atol=1e-10)
    np.testing.assert_allclose(out[1].samples, 2 * sig, atol=1e-10)
    ref = images_to_signals(images, 64, 16, spec.sample_rate, 900, ref_channel=1)
    np.testing.assert_allclose(ref[0].samples[0], sig[1], atol=1e-10)


def test_single_source_time_signal_matches_mixture(rng):
    sig = rng.standard_normal((2, 1200))
    spec = forward_stft(sig, 128)
    I, J = spec.n_freq, spec.n_frames
    W = np.eye(2) + 0.3 * crandn(rng, I, 2, 2)
    f = NmfFactors([rng.uniform(0.5, 1, (I, 2))], [rng.uniform(0.5, 1, (2, J))])
    images = reconstruct_images(W, f, spec.bins, [2])
    out = images_to_signals(images, 128, 32, spec.sample_rate, 1200, ref_channel=0)
    back = inverse_stft(spec)
    np.testing.assert_allclose(out[0].samples[0], back.samples[0], atol=1e-9)
