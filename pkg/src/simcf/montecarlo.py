# simcf/montecarlo.py
# Monte-Carlo estimation of the uplink SINR lower bound directly from its
# defining expectations: sampled channels, pilot observations, MMSE
# estimates, matched-filter combining and CPU-side weighting. Serves as the
# independent oracle for the closed-form engine, including a per-term audit
# of every interference expectation.

from dataclasses import dataclass

import numpy as np

from .channel import ChannelState, psd_sqrt
from .estimation import EstimationState, despread_pilot_noise, mmse_estimate


@dataclass(frozen=True)
class UatfEstimate:
    """Monte-Carlo SINR estimates and their standard errors."""
    gamma: np.ndarray     # (K,)
    stderr: np.ndarray    # (K,) delta-method standard error of gamma
    n_trials: int


@dataclass(frozen=True)
class CrossMomentEstimate:
    """Sample moments of the combined interference terms.

    moment[k, j, l, l'] estimates E{x_l conj(x_l')} with x_l the product of
    (estimate of UE k at AP l)^H and (channel of UE j at AP l); stderr_re /
    stderr_im are the per-entry standard errors of its real and imaginary
    parts. mean_gain[k, l] estimates E{x_l} for j = k with stderr
    mean_gain_stderr (complex-component-wise).
    """
    moment: np.ndarray        # (K, K, L, L) complex
    stderr_re: np.ndarray     # (K, K, L, L)
    stderr_im: np.ndarray     # (K, K, L, L)
    mean_gain: np.ndarray     # (K, L) complex
    mean_gain_stderr: np.ndarray  # (K, L)
    n_trials: int


class _TrialSampler:
    """Draws batches of (channel, estimate) realizations for all links."""

    def __init__(self, state: ChannelState, est: EstimationState, pilot_of,
                 p_hat, tau_p, sigma2, rng):
        self.state = state
        self.est = est
        self.pilot_of = np.asarray(pilot_of)
        self.p_hat = np.asarray(p_hat, dtype=float)
        self.tau_p = tau_p
        self.sigma2 = sigma2
        self.rng = np.random.default_rng(rng)
        r = state.r_all()
        n_ap, n_ue, u, _ = r.shape
        self.nlos_factor = np.zeros_like(r)
        for l in range(n_ap):
            for k in range(n_ue):
                self.nlos_factor[l, k] = psd_sqrt(r[l, k])
        self.n_pilots = int(self.pilot_of.max()) + 1
        self.shape = (n_ap, n_ue, u)

    def draw(self, batch):
        """(channels, estimates), each (batch, L, K, U)."""
        n_ap, n_ue, u = self.shape
        phase = self.rng.uniform(-np.pi, np.pi, size=(batch, n_ap, n_ue))
        white = (self.rng.standard_normal((batch, n_ap, n_ue, u))
                 + 1j * self.rng.standard_normal((batch, n_ap, n_ue, u))) / np.sqrt(2.0)
        nlos = np.einsum("lkuv,blkv->blku", self.nlos_factor, white)
        h = self.state.h_bar[None] * np.exp(1j * phase)[..., None] + nlos
        noise = despread_pilot_noise(self.rng, self.n_pilots, (batch, n_ap),
                                     u, self.tau_p, self.sigma2)
        h_hat = mmse_estimate(self.est, self.state.h_bar, phase, nlos,
                              self.pilot_of, self.p_hat, self.tau_p, noise)
        return h, h_hat


def _combined_products(h, h_hat):
    """x[b, l, k, j] = (estimate of k at AP l)^H (channel of j at AP l)."""
    return np.einsum("blku,blju->blkj", h_hat.conj(), h)


def uatf_monte_carlo(state, est, pilot_of, p, p_hat, tau_p, sigma2, weights,
                     n_trials, rng, batch=4096) -> UatfEstimate:
    """Plug-in Monte-Carlo SINR for fixed CPU weights (K, L).

    Accumulates, per UE k, the per-trial scalars
      u    = sum_l conj(a_kl) x[l, k, k]            (combined useful term)
      w_j  = |sum_l conj(a_kl) x[l, k, j]|^2        (combined interference)
      nv   = sum_l |a_kl|^2 ||estimate_lk||^2        (noise scale)
    and forms gamma_k = p_k |mean u|^2 / (sum_j p_j mean w_j
    - p_k |mean u|^2 + sigma2 mean nv). The standard error comes from the
    delta method on the (K + 3)-dimensional vector of sample means.
    """
    sampler = _TrialSampler(state, est, pilot_of, p_hat, tau_p, sigma2, rng)
    n_ap, n_ue, _ = sampler.shape
    p = np.asarray(p, dtype=float)
    weights = np.asarray(weights, dtype=complex)
    dim = n_ue + 3
    acc1 = np.zeros((n_ue, dim))
    acc2 = np.zeros((n_ue, dim, dim))
    done = 0
    while done < n_trials:
        b = min(batch, n_trials - done)
        h, h_hat = sampler.draw(b)
        x = _combined_products(h, h_hat)
        y = np.einsum("kl,blkj->bkj", weights.conj(), x)
        vnorm = np.real(np.einsum("blku,blku->blk", h_hat.conj(), h_hat))
        nv = np.einsum("kl,blk->bk", np.abs(weights) ** 2, vnorm)
        feats = np.zeros((b, n_ue, dim))
        idx = np.arange(n_ue)
        feats[:, :, 0] = y[:, idx, idx].real
        feats[:, :, 1] = y[:, idx, idx].imag
        feats[:, :, 2:2 + n_ue] = np.abs(y) ** 2
        feats[:, :, -1] = nv
        acc1 += feats.sum(axis=0)
        acc2 += np.einsum("bki,bkj->kij", feats, feats)
        done += b
    mean = acc1 / n_trials
    cov = acc2 / n_trials - np.einsum("ki,kj->kij", mean, mean)
    gamma = np.zeros(n_ue)
    stderr = np.zeros(n_ue)
    for k in range(n_ue):
        ur, ui = mean[k, 0], mean[k, 1]
        w = mean[k, 2:2 + n_ue]
        nv = mean[k, -1]
        num = p[k] * (ur ** 2 + ui ** 2)
        den = float(p @ w) - num + sigma2 * nv
        gamma[k] = num / den
        grad = np.zeros(dim)
        grad[0] = 2.0 * p[k] * ur * (den + num) / den ** 2
        grad[1] = 2.0 * p[k] * ui * (den + num) / den ** 2
        grad[2:2 + n_ue] = -num * p / den ** 2
        grad[-1] = -num * sigma2 / den ** 2
        var = float(grad @ cov[k] @ grad) / n_trials
        stderr[k] = np.sqrt(max(var, 0.0))
    return UatfEstimate(gamma=gamma, stderr=stderr, n_trials=n_trials)


def cross_moment_estimates(state, est, pilot_of, p_hat, tau_p, sigma2,
                           n_trials, rng, batch=4096) -> CrossMomentEstimate:
    """Sample every pairwise interference moment for the term audit."""
    sampler = _TrialSampler(state, est, pilot_of, p_hat, tau_p, sigma2, rng)
    n_ap, n_ue, _ = sampler.shape
    acc = np.zeros((n_ue, n_ue, n_ap, n_ap), dtype=complex)
    acc2_re = np.zeros((n_ue, n_ue, n_ap, n_ap))
    acc2_im = np.zeros((n_ue, n_ue, n_ap, n_ap))
    acc_mean = np.zeros((n_ue, n_ap), dtype=complex)
    acc2_mean = np.zeros((n_ue, n_ap))
    done = 0
    idx = np.arange(n_ue)
    while done < n_trials:
        b = min(batch, n_trials - done)
        h, h_hat = sampler.draw(b)
        x = _combined_products(h, h_hat)
        prod = np.einsum("blkj,bmkj->bkjlm", x, x.conj())
        acc += prod.sum(axis=0)
        acc2_re += (prod.real ** 2).sum(axis=0)
        acc2_im += (prod.imag ** 2).sum(axis=0)
        own = np.transpose(x[:, :, idx, idx], (0, 2, 1))     # (b, K, L)
        acc_mean += own.sum(axis=0)
        acc2_mean += (np.abs(own) ** 2).sum(axis=0)
        done += b
    moment = acc / n_trials
    var_re = np.maximum(acc2_re / n_trials - moment.real ** 2, 0.0)
    var_im = np.maximum(acc2_im / n_trials - moment.imag ** 2, 0.0)
    mean_gain = acc_mean / n_trials
    var_mean = np.maximum(acc2_mean / n_trials - np.abs(mean_gain) ** 2, 0.0)
    return CrossMomentEstimate(
        moment=moment,
        stderr_re=np.sqrt(var_re / n_trials),
        stderr_im=np.sqrt(var_im / n_trials),
        mean_gain=mean_gain,
        mean_gain_stderr=np.sqrt(var_mean / n_trials),
        n_trials=n_trials,
    )
