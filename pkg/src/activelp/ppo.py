"""Actor-critic PPO for discrete actions, built on small hand-rolled MLPs.

The actor outputs categorical logits, the critic a scalar value. Targets are
Monte-Carlo discounted returns, the policy update maximizes the clipped
surrogate plus an entropy bonus, and optimization uses Adam over minibatches.
Everything is numpy with explicit backprop so gradients can be checked
against finite differences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

ACTIVATIONS = ("sigmoid", "relu", "tanh")


class TrainingDiverged(RuntimeError):
    """Raised when the optimization produces non-finite losses or parameters."""


# ---------------------------------------------------------------------------
# networks


class Mlp:
    """Fully connected network: affine + activation per hidden layer, linear output."""

    def __init__(self, weights, biases, activation):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = list(weights)
        self.biases = list(biases)
        self.activation = activation

    @classmethod
    def build(cls, sizes, activation, rng, out_gain: float = 1.0) -> "Mlp":
        """Orthogonal-style init; out_gain scales the output layer (0.01 for a
        near-uniform initial policy)."""
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            a = rng.standard_normal((n_in, n_out))
            q, r = np.linalg.qr(a if n_in >= n_out else a.T)
            sign = np.where(np.diag(r) < 0, -1.0, 1.0)
            q = q * sign if n_in >= n_out else (q * sign).T
            gain = out_gain if i == len(sizes) - 2 else 1.0
            weights.append(gain * q)
            biases.append(np.zeros(n_out))
        return cls(weights, biases, activation)

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def load_flat(self, vec: np.ndarray):
        offset = 0
        for p in self.params:
            p[...] = vec[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != vec.size:
            raise ValueError(f"expected {offset} parameters, got {vec.size}")

    def _act(self, z):
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "tanh":
            return np.tanh(z)
        return 1.0 / (1.0 + np.exp(-z))

    def _act_grad(self, z, a):
        if self.activation == "relu":
            return (z > 0).astype(float)
        if self.activation == "tanh":
            return 1.0 - a * a
        return a * (1.0 - a)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.weights[0].shape[0]:
            raise ValueError(
                f"expected input of shape (N, {self.weights[0].shape[0]}), got {x.shape}")
        pre, act = [], [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else self._act(z)
            act.append(h)
        return h, (pre, act)

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. params, matching .params order."""
        pre, act = cache
        grads = [None] * (2 * len(self.weights))
        delta = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * self._act_grad(pre[i], act[i + 1])
            grads[2 * i] = act[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
        return grads

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.activation)


# ---------------------------------------------------------------------------
# categorical policy head


@dataclass
class Categorical:
    """Softmax distribution over rows of logits, stabilized by max subtraction."""

    logits: np.ndarray

    def __post_init__(self):
        z = self.logits - self.logits.max(axis=-1, keepdims=True)
        ez = np.exp(z)
        self.probs = ez / ez.sum(axis=-1, keepdims=True)
        self.logps = z - np.log(ez.sum(axis=-1, keepdims=True))

    def sample(self, rng) -> np.ndarray:
        cdf = np.cumsum(self.probs, axis=-1)
        u = rng.random(self.probs.shape[0])
        idx = (u[:, None] >= cdf).sum(axis=-1)
        return np.minimum(idx, self.probs.shape[1] - 1)

    def log_prob(self, actions: np.ndarray) -> np.ndarray:
        return self.logps[np.arange(self.logps.shape[0]), actions]

    def entropy(self) -> np.ndarray:
        return -(self.probs * self.logps).sum(axis=-1)

    def greedy(self) -> np.ndarray:
        return self.logits.argmax(axis=-1)


# ---------------------------------------------------------------------------
# returns and advantages


def compute_returns(rewards, gamma: float, dones=None) -> np.ndarray:
    """Discounted reward-to-go G_t = r_t + gamma*G_{t+1}, restarting at episode
    ends; the tail bootstraps zero."""
    rewards = np.asarray(rewards, dtype=float)
    if dones is None:
        dones = np.zeros(rewards.size, dtype=bool)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        if dones[t]:
            acc = 0.0
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def advantages(returns, values) -> np.ndarray:
    """Monte-Carlo advantage G - V, batch-normalized to zero mean, unit std."""
    returns = np.asarray(returns, dtype=float)
    values = np.asarray(values, dtype=float)
    if returns.shape != values.shape:
        raise ValueError("returns/values shape mismatch")
    adv = returns - values
    adv = adv - adv.mean()
    std = adv.std()
    return adv / std if std > 1e-12 else adv


# ---------------------------------------------------------------------------
# objective


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    returns: np.ndarray = field(default=None)
    advantages: np.ndarray = field(default=None)

    def __len__(self):
        return self.actions.size

    def select(self, idx) -> "RolloutBatch":
        return RolloutBatch(
            self.observations[idx], self.actions[idx], self.log_probs[idx],
            self.rewards[idx], self.values[idx], self.dones[idx],
            self.returns[idx], self.advantages[idx],
        )


def ppo_objective(batch: RolloutBatch, actor: Mlp, critic: Mlp,
                  clip_range: float, value_coef: float, entropy_coef: float):
    """Clipped-surrogate objective and its gradients.

    J = E[min(r*A, clip(r, 1-eps, 1+eps)*A)] - c1*MSE(V, G) + c2*E[H], with r
    the probability ratio against the collection-time log-probs. Returns
    (J, terms, actor_grads, critic_grads) where the gradients point in the
    ascent direction of J.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    n = len(batch)
    adv = batch.advantages

    logits, actor_cache = actor.forward_cached(batch.observations)
    dist = Categorical(logits)
    lp = dist.log_prob(batch.actions)
    ratio = np.exp(lp - batch.log_probs)
    clipped = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_term = float(np.minimum(surr1, surr2).mean())
    ent = dist.entropy()
    entropy_term = float(ent.mean())

    v_out, critic_cache = critic.forward_cached(batch.observations)
    v = v_out[:, 0]
    err = v - batch.returns
    value_loss = float(np.mean(err * err))

    objective = policy_term - value_coef * value_loss + entropy_coef * entropy_term

    # d policy_term / d log-prob of the taken action; the clipped branch is
    # flat in ratio whenever it is strictly selected.
    active = surr1 <= surr2
    coeff = np.where(active, adv * ratio, 0.0) / n

    one_hot = np.zeros_like(dist.probs)
    one_hot[np.arange(n), batch.actions] = 1.0
    d_logits = coeff[:, None] * (one_hot - dist.probs)
    # entropy bonus: dH/dz_j = -p_j * (log p_j + H)
    d_logits += entropy_coef / n * (-dist.probs * (dist.logps + ent[:, None]))
    actor_grads = actor.backward(actor_cache, d_logits)

    d_v = (-value_coef * 2.0 / n) * err
    critic_grads = critic.backward(critic_cache, d_v[:, None])

    terms = {"policy": policy_term, "value_loss": value_loss, "entropy": entropy_term}
    return objective, terms, actor_grads, critic_grads


class Adam:
    """Adaptive moment estimation, applied as gradient ascent on the objective."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def ascend(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            p += self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# agent specification and training


@dataclass(frozen=True)
class AgentSpec:
    """Searchable agent configuration: action set, network, PPO coefficients."""

    action_set: tuple[int, ...] = (0, 10, 20, 30, 40)
    activation: str = "tanh"
    hidden_layers: tuple[int, ...] = (8, 4)
    learning_rate: float = 3e-4
    clip_range: float = 0.2
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    gamma: float = 0.99
    gae_lambda: float | None = None  # reserved; Monte-Carlo targets when None
    rollout_length: int = 2500
    total_timesteps: int = 100_000
    epochs: int = 10
    minibatch_size: int = 64
    patience: int = 5
    improvement_threshold: float = 0.01

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError("clip_range must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("coefficients must be >= 0")
        if self.rollout_length < 1 or self.total_timesteps < 1:
            raise ValueError("rollout_length and total_timesteps must be >= 1")


@dataclass
class UpdateStats:
    update: int
    timesteps: int
    mean_episode_reward: float
    objective: float
    policy_term: float
    value_loss: float
    entropy: float


@dataclass
class TrainResult:
    spec: AgentSpec
    actor: Mlp
    critic: Mlp
    curve: list
    timesteps: int
    stopped_early: bool


def _collect_rollout(env, actor, critic, rng, n_steps, obs, episode_returns, running):
    obs_buf = np.empty((n_steps, env.obs_dim))
    act_buf = np.empty(n_steps, dtype=int)
    lp_buf = np.empty(n_steps)
    rew_buf = np.empty(n_steps)
    val_buf = np.empty(n_steps)
    done_buf = np.zeros(n_steps, dtype=bool)
    for i in range(n_steps):
        row = obs[None, :]
        dist = Categorical(actor.forward(row))
        action = int(dist.sample(rng)[0])
        value = float(critic.forward(row)[0, 0])
        out = env.step(action)
        obs_buf[i] = obs
        act_buf[i] = action
        lp_buf[i] = float(dist.log_prob(np.array([action]))[0])
        rew_buf[i] = out.reward
        val_buf[i] = value
        running[0] += out.reward
        if out.done:
            done_buf[i] = True
            episode_returns.append(running[0])
            running[0] = 0.0
            obs = env.reset()
        else:
            obs = out.observation
    return RolloutBatch(obs_buf, act_buf, lp_buf, rew_buf, val_buf, done_buf), obs


def train(env_factory, spec: AgentSpec, seed: int) -> TrainResult:
    """Run PPO until total_timesteps or early stop; deterministic given seed.

    Early stopping: after each update, the mean return of episodes finished
    since the last evaluation must beat the best seen by more than
    improvement_threshold (relative); `patience` misses in a row stop training.
    """
    env = env_factory()
    rng = np.random.default_rng(seed)
    sizes = [env.obs_dim, *spec.hidden_layers]
    actor = Mlp.build(sizes + [env.n_actions], spec.activation, rng, out_gain=0.01)
    critic = Mlp.build(sizes + [1], spec.activation, rng)
    opt_actor = Adam(actor.params, spec.learning_rate)
    opt_critic = Adam(critic.params, spec.learning_rate)

    obs = env.reset()
    running = [0.0]
    episode_returns: list[float] = []
    curve: list[UpdateStats] = []
    timesteps = 0
    update = 0
    best = -np.inf
    misses = 0
    evaluated = 0
    stopped_early = False

    while timesteps < spec.total_timesteps:
        n = min(spec.rollout_length, spec.total_timesteps - timesteps)
        batch, obs = _collect_rollout(env, actor, critic, rng, n, obs,
                                      episode_returns, running)
        timesteps += n
        update += 1
        batch.returns = compute_returns(batch.rewards, spec.gamma, batch.dones)
        batch.advantages = advantages(batch.returns, batch.values)

        for _ in range(spec.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, spec.minibatch_size):
                mb = batch.select(order[lo:lo + spec.minibatch_size])
                objective, _, ga, gc = ppo_objective(
                    mb, actor, critic, spec.clip_range, spec.value_coef, spec.entropy_coef)
                if not np.isfinite(objective):
                    raise TrainingDiverged(
                        f"non-finite objective at update {update} ({timesteps} steps)")
                opt_actor.ascend(ga)
                opt_critic.ascend(gc)
        if not all(np.all(np.isfinite(p)) for p in actor.params + critic.params):
            raise TrainingDiverged(f"non-finite parameters at update {update}")

        objective, terms, _, _ = ppo_objective(
            batch, actor, critic, spec.clip_range, spec.value_coef, spec.entropy_coef)
        mean_ep = float(np.mean(episode_returns[evaluated:])) if len(episode_returns) > evaluated else np.nan
        curve.append(UpdateStats(update, timesteps, mean_ep, float(objective),
                                 terms["policy"], terms["value_loss"], terms["entropy"]))

        if len(episode_returns) > evaluated:
            evaluated = len(episode_returns)
            improved = (not np.isfinite(best)
                        or mean_ep > best + spec.improvement_threshold * abs(best))
            if improved:
                best = mean_ep
                misses = 0
            else:
                misses += 1
                if misses >= spec.patience:
                    stopped_early = True
                    break

    return TrainResult(spec=spec, actor=actor, critic=critic, curve=curve,
                       timesteps=timesteps, stopped_early=stopped_early)


def greedy_action_fn(actor: Mlp):
    """Deterministic argmax policy over actor logits."""

    def act(obs, _step):
        return int(np.argmax(actor.forward(obs[None, :])[0]))

    return act


# ---------------------------------------------------------------------------
# persistence

CHECKPOINT_VERSION = 1


def save_checkpoint(path, result: TrainResult):
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(result.spec),
        "activation": result.actor.activation,
        "actor_layers": len(result.actor.weights),
        "critic_layers": len(result.critic.weights),
        "timesteps": result.timesteps,
        "stopped_early": result.stopped_early,
    }
    arrays = {}
    for i, (w, b) in enumerate(zip(result.actor.weights, result.actor.biases)):
        arrays[f"actor_w{i}"] = w
        arrays[f"actor_b{i}"] = b
    for i, (w, b) in enumerate(zip(result.critic.weights, result.critic.biases)):
        arrays[f"critic_w{i}"] = w
        arrays[f"critic_b{i}"] = b
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_checkpoint(path) -> TrainResult:
    blob = np.load(path, allow_pickle=False)
    meta = json.loads(str(blob["meta"]))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    spec_dict = meta["spec"]
    spec_dict["action_set"] = tuple(spec_dict["action_set"])
    spec_dict["hidden_layers"] = tuple(spec_dict["hidden_layers"])
    spec = AgentSpec(**spec_dict)
    activation = meta["activation"]
    actor = Mlp(
        [blob[f"actor_w{i}"] for i in range(meta["actor_layers"])],
        [blob[f"actor_b{i}"] for i in range(meta["actor_layers"])], activation)
    critic = Mlp(
        [blob[f"critic_w{i}"] for i in range(meta["critic_layers"])],
        [blob[f"critic_b{i}"] for i in range(meta["critic_layers"])], activation)
    return TrainResult(spec=spec, actor=actor, critic=critic, curve=[],
                       timesteps=meta["timesteps"], stopped_early=meta["stopped_early"])


def save_training_curve(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "timesteps", "mean_episode_reward",
                         "objective", "policy_term", "value_loss", "entropy"])
        for row in curve:
            writer.writerow([row.update, row.timesteps, repr(row.mean_episode_reward),
                             repr(row.objective), repr(row.policy_term),
                             repr(row.value_loss), repr(row.entropy)])
