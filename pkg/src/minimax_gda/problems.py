"""Stochastic minimax test problems with exact stationarity oracles.

All problems have the form  min_x max_y E_xi f(x, y; xi)  with f strongly
concave in y. Each one exposes exact partial gradients, mini-batch
gradients, and (where the inner maximizer has a closed form) y*(x), F(x)
and grad F(x). Arguments may carry leading lane axes; a mini-batch then
carries the same lane axes in front of its ``(q, width)`` draw block.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ContractError,
    MiniBatch,
    RngStream,
    UnsupportedCapability,
    as_vector,
    batch_mean,
    dot,
    draw_batch,
    matvec,
    sqnorm,
)
from .geometry import ConstraintSet, Simplex, Unconstrained, project_simplex

__all__ = [
    "ProblemSpec",
    "StochasticMinimaxProblem",
    "QuadraticMinimax",
    "RobustWeightedLoss",
    "PolicyEvalMSPBE",
    "grad_x_exact",
    "grad_y_exact",
    "grad_batch",
    "y_star",
    "grad_F_exact",
]


@dataclass(frozen=True)
class ProblemSpec:
    d1: int
    d2: int
    mu: float
    l_f: float
    sigma: float | None
    x_set: ConstraintSet
    y_set: ConstraintSet

    def __post_init__(self):
        if not self.mu > 0:
            raise ContractError(f"strong-concavity modulus must be positive, got {self.mu}")
        if self.l_f < self.mu * (1 - 1e-12):
            raise ContractError(f"need mu <= L_f, got mu={self.mu}, L_f={self.l_f}")
        if self.sigma is not None and self.sigma < 0:
            raise ContractError("sigma must be non-negative")

    @property
    def kappa(self) -> float:
        return self.l_f / self.mu

    @property
    def l_primal(self) -> float:
        """Smoothness of F(x) = max_y f(x, y): L_f (1 + kappa)."""
        return self.l_f * (1.0 + self.kappa)


class StochasticMinimaxProblem:
    """Oracle contract shared by every problem family."""

    spec: ProblemSpec
    draw_kind = "uniform"
    draw_width = 1
    has_closed_form = False

    @property
    def d1(self) -> int:
        return self.spec.d1

    @property
    def d2(self) -> int:
        return self.spec.d2

    def initial_point(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def decode(self, raw: np.ndarray) -> np.ndarray:
        """Map raw draws of shape (..., q, width) to sample identifiers."""
        return raw

    def sample(self, rng: RngStream, q: int) -> MiniBatch:
        raw = draw_batch(rng, q, self.draw_width, self.draw_kind)
        return MiniBatch(self.decode(raw.draws))

    def value(self, x, y):
        raise NotImplementedError

    def grad_x_exact(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def grad_y_exact(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def grad_batch(self, x, y, batch: MiniBatch) -> tuple[np.ndarray, np.ndarray]:
        x, y = self._xy(x, y)
        draws = batch.draws
        if draws.shape[-1] != self.draw_width:
            raise ContractError(f"batch width {draws.shape[-1]} does not match {self.draw_width}")
        return self.batch_grads(x, y, draws)

    def batch_grads(self, x: np.ndarray, y: np.ndarray, draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unchecked mini-batch gradients; solvers call this in their inner loop."""
        raise NotImplementedError

    def primal_grad(self, x: np.ndarray) -> np.ndarray:
        """Unchecked counterpart of ``grad_F_exact``."""
        return self.grad_F_exact(x)

    def y_star(self, x) -> np.ndarray:
        raise UnsupportedCapability(f"{type(self).__name__} has no closed-form maximizer")

    def primal_value(self, x):
        return self.value(x, self.y_star(x))

    def grad_F_exact(self, x) -> np.ndarray:
        raise UnsupportedCapability(f"{type(self).__name__} has no closed-form primal gradient")

    def _xy(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return as_vector(x, self.d1, "x"), as_vector(y, self.d2, "y")


def grad_x_exact(problem: StochasticMinimaxProblem, x, y) -> np.ndarray:
    return problem.grad_x_exact(x, y)


def grad_y_exact(problem: StochasticMinimaxProblem, x, y) -> np.ndarray:
    return problem.grad_y_exact(x, y)


def grad_batch(problem: StochasticMinimaxProblem, x, y, batch: MiniBatch):
    return problem.grad_batch(x, y, batch)


def y_star(problem: StochasticMinimaxProblem, x) -> np.ndarray:
    return problem.y_star(x)


def grad_F_exact(problem: StochasticMinimaxProblem, x) -> np.ndarray:
    return problem.grad_F_exact(x)


def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


class QuadraticMinimax(StochasticMinimaxProblem):
    """f(x, y) = 1/2 x'Px + x'Qy - mu/2 ||y||^2 with additive Gaussian gradient noise.

    Each sample perturbs grad_x and grad_y by independent N(0, sigma^2/d_i)
    coordinates, so the per-sample error variance of each partial gradient
    is exactly sigma^2.
    """

    draw_kind = "normal"
    has_closed_form = True

    def __init__(self, P, Q, mu: float, sigma: float = 0.0, x0=None, y0=None,
                 x_set: ConstraintSet | None = None, y_set: ConstraintSet | None = None,
                 l_f: float | None = None):
        P = np.array(P, dtype=np.float64)
        Q = np.array(Q, dtype=np.float64)
        d1, d2 = Q.shape
        if P.shape != (d1, d1) or not np.allclose(P, P.T, atol=0, rtol=0):
            raise ContractError("P must be a symmetric d1 x d1 matrix")
        self.P, self.Q, self.Qt = P, Q, np.ascontiguousarray(Q.T)
        self.mu = float(mu)
        if l_f is None:
            l_f = max(np.linalg.norm(P, 2), np.linalg.norm(Q, 2), self.mu)
        self.spec = ProblemSpec(d1, d2, self.mu, float(l_f), float(sigma),
                                x_set or Unconstrained(d1), y_set or Unconstrained(d2))
        self.draw_width = d1 + d2
        # both partial gradients as one block matvec over z = (x, y)
        self._block = np.block([[P, Q], [self.Qt, -self.mu * np.eye(d2)]])
        self._hess_F = P + Q @ self.Qt / self.mu
        self._noise = np.concatenate([np.full(d1, float(sigma) / np.sqrt(d1)),
                                      np.full(d2, float(sigma) / np.sqrt(d2))])
        self.x0 = np.zeros(d1) if x0 is None else as_vector(x0, d1, "x0")
        self.y0 = np.zeros(d2) if y0 is None else as_vector(y0, d2, "y0")

    @classmethod
    def random(cls, d1: int = 10, d2: int = 10, mu: float = 1.0, sigma: float = 0.1,
               p_eigs: tuple[float, float] = (0.1, 1.0), q_svals: tuple[float, float] = (0.5, 1.0),
               data_seed: int = 0, x0_scale: float = 1.0) -> QuadraticMinimax:
        """Instance with prescribed spectra: eig(P) and sv(Q) evenly spaced in the given ranges.

        A negative lower end of ``p_eigs`` makes f nonconvex in x.
        """
        gen = np.random.default_rng(data_seed)
        u = _random_orthogonal(gen, d1)
        P = (u * np.linspace(*p_eigs, d1)) @ u.T
        P = 0.5 * (P + P.T)
        k = min(d1, d2)
        s = np.linspace(q_svals[1], q_svals[0], k)
        Q = _random_orthogonal(gen, d1)[:, :k] @ (s[:, None] * _random_orthogonal(gen, d2)[:k, :])
        x0 = gen.standard_normal(d1)
        x0 *= x0_scale / np.linalg.norm(x0)
        return cls(P, Q, mu, sigma, x0=x0)

    def initial_point(self):
        return self.x0.copy(), self.y0.copy()

    def value(self, x, y):
        x, y = self._xy(x, y)
        return 0.5 * dot(x, matvec(self.P, x)) + dot(x, matvec(self.Q, y)) - 0.5 * self.mu * sqnorm(y)

    def _grads(self, x, y) -> np.ndarray:
        if x.shape[:-1] != y.shape[:-1]:
            lanes = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
            x, y = np.broadcast_to(x, lanes + x.shape[-1:]), np.broadcast_to(y, lanes + y.shape[-1:])
        return matvec(self._block, np.concatenate([x, y], axis=-1))

    def grad_x_exact(self, x, y):
        x, y = self._xy(x, y)
        return self._grads(x, y)[..., : self.d1]

    def grad_y_exact(self, x, y):
        x, y = self._xy(x, y)
        return self._grads(x, y)[..., self.d1 :]

    def batch_grads(self, x, y, draws):
        g = self._grads(x, y) + self._noise * batch_mean(draws)
        return g[..., : self.d1], g[..., self.d1 :]

    def y_star(self, x):
        x = as_vector(x, self.d1, "x")
        return matvec(self.Qt, x) / self.mu

    def grad_F_exact(self, x):
        return self.primal_grad(as_vector(x, self.d1, "x"))

    def primal_grad(self, x):
        return matvec(self._hess_F, x)


def _log1pexp(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, t)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * t))


class RobustWeightedLoss(StochasticMinimaxProblem):
    """Group-reweighted logistic regression.

    f(w, u) = sum_i u_i L_i(w) - reg ||u - 1/n||^2 over u in the simplex,
    where L_i is the mean logistic loss of group i. One sample draws one
    data point from every group, which keeps both partial gradients
    unbiased.
    """

    draw_kind = "uniform"
    has_closed_form = True

    def __init__(self, groups: list[tuple[np.ndarray, np.ndarray]], reg: float, w0=None,
                 x_set: ConstraintSet | None = None):
        if len(groups) < 2:
            raise ContractError("need at least two groups")
        if not reg > 0:
            raise ContractError("regularizer weight must be positive")
        self.features = [np.ascontiguousarray(f, dtype=np.float64) for f, _ in groups]
        self.labels = [np.asarray(lab, dtype=np.float64) for _, lab in groups]
        for f, lab in zip(self.features, self.labels):
            if f.ndim != 2 or f.shape[0] != lab.shape[0] or f.shape[0] == 0:
                raise ContractError("each group needs a non-empty (n_i, d) feature matrix and n_i labels")
            if not np.all(np.abs(lab) == 1.0):
                raise ContractError("labels must be +1 or -1")
        d = self.features[0].shape[1]
        if any(f.shape[1] != d for f in self.features):
            raise ContractError("all groups need the same feature dimension")
        self.n_groups = len(groups)
        self.reg = float(reg)
        self.sizes = np.array([f.shape[0] for f in self.features])
        self.center = np.full(self.n_groups, 1.0 / self.n_groups)
        zmax = max(float(np.max(np.linalg.norm(f, axis=1))) for f in self.features)
        l_f = max(zmax**2 / 4.0, np.sqrt(self.n_groups) * zmax, 2.0 * self.reg)
        # finite-sum noise has no global variance bound (losses grow with w)
        self.spec = ProblemSpec(d, self.n_groups, 2.0 * self.reg, l_f, None,
                                x_set or Unconstrained(d), Simplex(self.n_groups))
        self.draw_width = self.n_groups
        self.w0 = np.zeros(d) if w0 is None else as_vector(w0, d, "w0")

    @classmethod
    def synthetic(cls, n_per_group: int = 200, reg: float = 0.1, data_seed: int = 0,
                  means=None, scales=None) -> RobustWeightedLoss:
        """Three groups of 2-D Gaussian class-conditional data with an intercept feature.

        The default groups disagree on the best decision direction, and the
        third is noisier, so the uniform average favours the first two.
        """
        gen = np.random.default_rng(data_seed)
        means = np.array([[1.5, 0.0], [1.2, 0.4], [0.2, 1.0]]) if means is None else np.asarray(means)
        scales = np.array([0.8, 0.8, 1.0]) if scales is None else np.asarray(scales)
        groups = []
        for m, s in zip(means, scales):
            lab = np.where(gen.random(n_per_group) < 0.5, 1.0, -1.0)
            pts = lab[:, None] * m + s * gen.standard_normal((n_per_group, 2))
            groups.append((np.column_stack([pts, np.ones(n_per_group)]), lab))
        return cls(groups, reg)

    @classmethod
    def from_csv(cls, path, reg: float = 0.1, intercept: bool = True) -> RobustWeightedLoss:
        """Load ``group_id,label,feature_1,...,feature_k`` rows (header required)."""
        rows: dict[str, list[list[float]]] = {}
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or [h.strip() for h in header[:2]] != ["group_id", "label"] or len(header) < 3:
                raise ContractError("CSV header must be group_id,label,feature_1,...")
            width = len(header)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != width:
                    raise ContractError(f"line {lineno}: expected {width} fields, got {len(row)}")
                rows.setdefault(row[0].strip(), []).append([float(v) for v in row[1:]])
        groups = []
        for key in sorted(rows):
            arr = np.array(rows[key])
            lab = np.where(arr[:, 0] > 0, 1.0, -1.0)
            feats = arr[:, 1:]
            if intercept:
                feats = np.column_stack([feats, np.ones(len(feats))])
            groups.append((feats, lab))
        return cls(groups, reg)

    def initial_point(self):
        return self.w0.copy(), self.center.copy()

    def decode(self, raw):
        idx = np.floor(raw * self.sizes).astype(np.int64)
        return np.minimum(idx, self.sizes - 1)

    def group_losses(self, w) -> np.ndarray:
        w = as_vector(w, self.d1, "w")
        cols = []
        for f, lab in zip(self.features, self.labels):
            margins = lab * dot(f, w[..., None, :])
            cols.append(batch_mean(_log1pexp(-margins)[..., None])[..., 0])
        return np.stack(cols, axis=-1)

    def _group_grads(self, w) -> list[np.ndarray]:
        out = []
        for f, lab in zip(self.features, self.labels):
            margins = lab * dot(f, w[..., None, :])
            coef = -lab * _sigmoid(-margins)
            out.append(batch_mean(coef[..., None] * f))
        return out

    def value(self, x, y):
        w, u = self._xy(x, y)
        return dot(u, self.group_losses(w)) - self.reg * sqnorm(u - self.center)

    def grad_x_exact(self, x, y):
        w, u = self._xy(x, y)
        grads = self._group_grads(w)
        acc = u[..., 0:1] * grads[0]
        for i in range(1, self.n_groups):
            acc = acc + u[..., i : i + 1] * grads[i]
        return acc

    def grad_y_exact(self, x, y):
        w, u = self._xy(x, y)
        return self.group_losses(w) - 2.0 * self.reg * (u - self.center)

    def batch_grads(self, w, u, idx):
        gx = None
        losses = []
        for i, (f, lab) in enumerate(zip(self.features, self.labels)):
            z = f[idx[..., i]]  # (..., q, d)
            yl = lab[idx[..., i]]
            margins = yl * dot(z, w[..., None, :])
            losses.append(batch_mean(_log1pexp(-margins)[..., None])[..., 0])
            gi = batch_mean((-yl * _sigmoid(-margins))[..., None] * z)
            term = u[..., i : i + 1] * gi
            gx = term if gx is None else gx + term
        gy = np.stack(losses, axis=-1) - 2.0 * self.reg * (u - self.center)
        return gx, gy

    def y_star(self, x):
        return project_simplex(self.center + self.group_losses(x) / (2.0 * self.reg))

    def grad_F_exact(self, x):
        return self.grad_x_exact(x, self.y_star(x))


class PolicyEvalMSPBE(StochasticMinimaxProblem):
    """Linear-feature policy evaluation as a minimax problem.

    With V(s; theta) = phi(s)'theta and delta = R + tau V(s') - V(s),

        f(theta, omega) = E[ delta * phi(s)'omega - 1/2 (phi(s)'omega)^2 ],

    expectation over s ~ stationary distribution, a ~ pi(.|s),
    s' ~ P(.|s, a). This is omega'(b - A theta) - 1/2 omega'H omega with
    A = E[phi (phi - tau phi')'], b = E[R phi], H = E[phi phi'].
    """

    draw_kind = "uniform"
    draw_width = 1
    has_closed_form = True

    def __init__(self, transition, policy, reward, features, discount: float, theta0=None):
        self.transition = np.asarray(transition, dtype=np.float64)  # (S, A, S)
        self.policy = np.asarray(policy, dtype=np.float64)  # (S, A)
        self.reward = np.asarray(reward, dtype=np.float64)  # (S, A, S)
        self.phi = np.asarray(features, dtype=np.float64)  # (S, d)
        n_s, n_a, _ = self.transition.shape
        if self.policy.shape != (n_s, n_a) or self.reward.shape != self.transition.shape:
            raise ContractError("inconsistent MDP array shapes")
        if not 0.0 <= discount < 1.0:
            raise ContractError("discount must lie in [0, 1)")
        if not (np.allclose(self.transition.sum(-1), 1.0) and np.allclose(self.policy.sum(-1), 1.0)):
            raise ContractError("transition kernel and policy rows must sum to one")
        self.discount = float(discount)
        self.n_states, self.n_actions = n_s, n_a
        self.stationary = self._stationary()
        # joint law of (s, a, s') flattened in C order
        joint = self.stationary[:, None, None] * self.policy[:, :, None] * self.transition
        self.outcome_prob = joint.ravel()
        self.outcome_cdf = np.cumsum(self.outcome_prob)
        s, a, s2 = np.unravel_index(np.arange(joint.size), joint.shape)
        self.outcome_s, self.outcome_a, self.outcome_next = s, a, s2
        self.outcome_reward = self.reward.ravel()

        phi_s, phi_n = self.phi[s], self.phi[s2]
        p = self.outcome_prob[:, None, None]
        self.H = np.sum(p * phi_s[:, :, None] * phi_s[:, None, :], axis=0)
        self.A = np.sum(p * phi_s[:, :, None] * (phi_s - self.discount * phi_n)[:, None, :], axis=0)
        self.b = np.sum(self.outcome_prob[:, None] * self.outcome_reward[:, None] * phi_s, axis=0)
        self.H = 0.5 * (self.H + self.H.T)
        self.At = np.ascontiguousarray(self.A.T)
        mu = float(np.linalg.eigvalsh(self.H)[0])
        if not mu > 0:
            raise ContractError("feature covariance is not positive definite")
        self.H_inv = np.linalg.inv(self.H)
        support = self.outcome_prob > 0
        td = phi_s - self.discount * phi_n
        per_sample = max(
            float(np.max(np.linalg.norm(phi_s[support], axis=1) * np.linalg.norm(td[support], axis=1))),
            float(np.max(np.linalg.norm(phi_s[support], axis=1) ** 2)),
        )
        l_f = max(np.linalg.norm(self.A, 2), np.linalg.norm(self.H, 2), per_sample, mu)
        d = self.phi.shape[1]
        self.spec = ProblemSpec(d, d, mu, float(l_f), None, Unconstrained(d), Unconstrained(d))
        self.theta0 = np.zeros(d) if theta0 is None else as_vector(theta0, d, "theta0")

    @classmethod
    def random(cls, n_states: int = 5, n_actions: int = 2, n_features: int = 3,
               discount: float = 0.95, reward_bound: float = 1.0, data_seed: int = 0) -> PolicyEvalMSPBE:
        gen = np.random.default_rng(data_seed)
        transition = gen.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        policy = gen.dirichlet(np.ones(n_actions), size=n_states)
        reward = gen.uniform(-reward_bound, reward_bound, size=(n_states, n_actions, n_states))
        features = gen.standard_normal((n_states, n_features)) / np.sqrt(n_features)
        theta0 = gen.standard_normal(n_features)
        return cls(transition, policy, reward, features, discount, theta0=theta0)

    def _stationary(self) -> np.ndarray:
        p_pi = np.einsum("sa,sat->st", self.policy, self.transition)
        n = self.n_states
        lhs = np.vstack([p_pi.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        d, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        d = np.clip(d, 0.0, None)
        return d / d.sum()

    def initial_point(self):
        return self.theta0.copy(), np.zeros(self.d2)

    def decode(self, raw):
        idx = np.searchsorted(self.outcome_cdf, raw, side="right")
        return np.minimum(idx, self.outcome_prob.size - 1)

    def value(self, x, y):
        theta, omega = self._xy(x, y)
        return dot(omega, self.b - matvec(self.A, theta)) - 0.5 * dot(omega, matvec(self.H, omega))

    def grad_x_exact(self, x, y):
        _, omega = self._xy(x, y)
        return -matvec(self.At, omega)

    def grad_y_exact(self, x, y):
        theta, omega = self._xy(x, y)
        return self.b - matvec(self.A, theta) - matvec(self.H, omega)

    def sample_gradients(self, x, y, outcome: np.ndarray):
        """Per-sample partial gradients for outcome indices of shape (..., q)."""
        theta, omega = self._xy(x, y)
        return self._sample_gradients(theta, omega, outcome)

    def _sample_gradients(self, theta, omega, outcome):
        phi_s = self.phi[self.outcome_s[outcome]]
        phi_n = self.phi[self.outcome_next[outcome]]
        r = self.outcome_reward[outcome]
        th = theta[..., None, :]
        om = omega[..., None, :]
        delta = r + self.discount * dot(phi_n, th) - dot(phi_s, th)
        proj = dot(phi_s, om)
        gx = proj[..., None] * (self.discount * phi_n - phi_s)
        gy = (delta - proj)[..., None] * phi_s
        return gx, gy

    def batch_grads(self, theta, omega, draws):
        gx, gy = self._sample_gradients(theta, omega, draws[..., 0])
        return batch_mean(gx), batch_mean(gy)

    def y_star(self, x):
        theta = as_vector(x, self.d1, "theta")
        return matvec(self.H_inv, self.b - matvec(self.A, theta))

    def grad_F_exact(self, x):
        return -matvec(self.At, self.y_star(x))
