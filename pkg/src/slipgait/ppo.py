"""Proximal policy optimization on the walking environment.

On-policy training with a clipped surrogate objective, generalized advantage
estimation, parallel experience collection, and running input normalization.
Policy and value networks are the in-repo MLPs; the action distribution is a
diagonal Gaussian with fixed (configurable) standard deviation.

Experience is collected in self-contained chunks: each chunk builds a fresh
environment from the factory with a seed derived from (master seed, update,
chunk index), so results are bit-identical across runs and independent of
process scheduling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, Mlp, RunningNorm

CHECKPOINT_VERSION = 1


@dataclass
class PpoConfig:
    learning_rate: float = 1e-4
    adam_epsilon: float = 1e-5
    gamma: float = 0.99
    clip: float = 0.2
    epochs: int = 3
    minibatch: int = 64
    sample_size: int = 5096
    gae_lambda: float = 0.95
    hidden: int = 64
    log_std: float = -2.0
    value_coef: float = 0.5
    obs_clip: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.clip < 1.0):
            raise ValueError("clip parameter must lie in (0, 1)")
        if self.minibatch > self.sample_size:
            raise ValueError("minibatch cannot exceed the sample size")
        for name in ("learning_rate", "adam_epsilon", "gamma", "epochs",
                     "minibatch", "sample_size", "gae_lambda", "hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class PolicyNet:
    """Gaussian policy: MLP mean, fixed diagonal standard deviation."""

    def __init__(self, obs_dim, act_dim, hidden=64, log_std=-2.0, rng=None):
        # near-zero final layer: the initial policy stays close to the
        # baseline motion the actions are deltas on
        self.net = Mlp([obs_dim, hidden, hidden, act_dim], rng=rng, final_scale=0.01)
        self.log_std = np.full(act_dim, float(log_std)) if np.ndim(log_std) == 0 \
            else np.asarray(log_std, dtype=float)
        if np.any(self.log_std <= -20):
            raise ValueError("standard deviation must be strictly positive")

    @property
    def obs_dim(self):
        return self.net.sizes[0]

    @property
    def act_dim(self):
        return self.net.sizes[-1]

    @property
    def std(self):
        return np.exp(self.log_std)

    def mean(self, obs):
        return self.net(obs)

    def state_dict(self):
        return {"net": self.net.to_dict(), "log_std": self.log_std.tolist()}

    def load_state_dict(self, d):
        self.net = Mlp.from_dict(d["net"])
        self.log_std = np.asarray(d["log_std"], dtype=float)


def forward(net: PolicyNet, observation):
    """Deterministic action mean for one observation."""
    obs = np.asarray(observation, dtype=float)
    if obs.shape[-1] != net.obs_dim:
        raise ValueError(f"observation length {obs.shape[-1]} != {net.obs_dim}")
    return net.mean(obs)[0] if obs.ndim == 1 else net.mean(obs)


def gaussian_logp(mean, log_std, actions):
    """Exact diagonal-Gaussian log density, one value per row."""
    mean = np.atleast_2d(mean)
    actions = np.atleast_2d(actions)
    std = np.exp(log_std)
    z = (actions - mean) / std
    return (-0.5 * np.sum(z * z, axis=1)
            - np.sum(log_std)
            - 0.5 * mean.shape[1] * math.log(2.0 * math.pi))


def sample_action(mean, std, rng):
    """Draw an action from N(mean, diag(std^2)) with its log probability."""
    mean = np.asarray(mean, dtype=float)
    noise = rng.normal(size=mean.shape)
    action = mean + std * noise
    logp = float(gaussian_logp(mean, np.log(std), action)[0])
    return action, logp


def compute_gae(rewards, values, dones, gamma, lam, last_value=0.0):
    """Generalized advantage estimation over one transition stream.

    ``dones`` marks terminal steps (no bootstrapping across them); the value
    of the state after the final transition enters through ``last_value``
    when the stream is truncated mid-episode. Returns (advantages,
    returns = advantages + values).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = rewards.size
    if values.size != n or dones.size != n:
        raise ValueError("rewards, values, and dones must align")
    adv = np.zeros(n)
    gae = 0.0
    next_value = float(last_value)
    for t in range(n - 1, -1, -1):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * mask - values[t]
        gae = delta + gamma * lam * mask * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBatch:
    obs: np.ndarray            # normalized observations used by the policy
    raw_obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray = None
    advantages: np.ndarray = None
    returns: np.ndarray = None
    episode_returns: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)

    def __len__(self):
        return self.obs.shape[0]


def policy_loss_and_grads(policy, obs, actions, logp_old, advantages, clip):
    """Clipped-surrogate loss, flat parameter gradient, and diagnostics."""
    mean, cache = policy.net.forward(obs)
    logp = gaussian_logp(mean, policy.log_std, actions)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    surrogate = np.minimum(surr1, surr2)
    loss = -float(np.mean(surrogate))

    n = obs.shape[0]
    use_unclipped = surr1 <= surr2
    dlogp = np.where(use_unclipped, ratio * advantages, 0.0) * (-1.0 / n)
    var = np.exp(2.0 * policy.log_std)
    dmean = dlogp[:, None] * (actions - mean) / var
    grads_w, grads_b, _ = policy.net.backward(cache, dmean)
    stats = {
        "policy_loss": loss,
        "clip_fraction": float(np.mean(~use_unclipped)),
        "approx_kl": float(np.mean(logp_old - logp)),
    }
    return loss, policy.net.flat_grads(grads_w, grads_b), stats


def value_loss_and_grads(value_net, obs, returns):
    v, cache = value_net.forward(obs)
    err = v[:, 0] - returns
    n = obs.shape[0]
    loss = 0.5 * float(np.mean(err * err))
    grads_w, grads_b, _ = value_net.backward(cache, (err / n)[:, None])
    return loss, value_net.flat_grads(grads_w, grads_b)


def ppo_update(policy, value_net, batch, config, rng, policy_opt, value_opt):
    """Clipped-surrogate epochs over shuffled minibatches; returns stats."""
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(batch)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "clip_fraction": 0.0,
             "approx_kl": 0.0}
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = perm[start : start + config.minibatch]
            ploss, pgrad, pstats = policy_loss_and_grads(
                policy, batch.obs[idx], batch.actions[idx], batch.logp[idx],
                adv[idx], config.clip,
            )
            if not np.isfinite(ploss):
                raise FloatingPointError("non-finite policy loss; aborting update")
            vloss, vgrad = value_loss_and_grads(value_net, batch.obs[idx],
                                                batch.returns[idx])
            if not np.isfinite(vloss):
                raise FloatingPointError("non-finite value loss; aborting update")
            _apply_flat(policy.net, policy_opt, pgrad)
            _apply_flat(value_net, value_opt, config.value_coef * vgrad)
            stats["policy_loss"] += ploss
            stats["value_loss"] += vloss
            stats["clip_fraction"] += pstats["clip_fraction"]
            stats["approx_kl"] += pstats["approx_kl"]
            count += 1
    return {k: v / max(count, 1) for k, v in stats.items()}


def _apply_flat(net, opt, flat_grad):
    grads = []
    pos = 0
    for w in net.weights:
        grads.append(flat_grad[pos : pos + w.size].reshape(w.shape))
        pos += w.size
    for b in net.biases:
        grads.append(flat_grad[pos : pos + b.size])
        pos += b.size
    opt.step(grads)


# ---------------------------------------------------------------------------
# experience collection
# ---------------------------------------------------------------------------

_WORKER_FACTORY = None


def _worker_init(factory):
    global _WORKER_FACTORY
    _WORKER_FACTORY = factory


def _collect_chunk(payload):
    """Collect a fixed number of steps in a freshly seeded environment.

    Runs in a worker process (or inline); everything needed arrives in the
    payload so the result is independent of scheduling.
    """
    (policy_state, norm_state, n_steps, env_seed, action_seed) = payload
    env = _WORKER_FACTORY(env_seed)
    policy = PolicyNet(1, 1)
    policy.load_state_dict(policy_state)
    norm = RunningNorm.from_dict(norm_state)
    rng = np.random.default_rng(np.random.SeedSequence(action_seed))

    raw_obs, norm_obs, actions, logps, rewards, dones = [], [], [], [], [], []
    ep_returns, ep_lengths = [], []
    obs = env.reset()
    ep_ret, ep_len = 0.0, 0
    std = policy.std
    for _ in range(n_steps):
        z = norm.normalize(obs)
        mean = policy.mean(z)[0]
        action, logp = sample_action(mean, std, rng)
        nxt, reward, done, info = env.step(action)
        raw_obs.append(obs)
        norm_obs.append(z)
        actions.append(action)
        logps.append(logp)
        rewards.append(reward)
        dones.append(done)
        ep_ret += reward
        ep_len += 1
        if done:
            ep_returns.append(ep_ret)
            ep_lengths.append(ep_len)
            ep_ret, ep_len = 0.0, 0
            obs = env.reset()
        else:
            obs = nxt
    final_norm_obs = norm.normalize(obs)
    return {
        "raw_obs": np.array(raw_obs),
        "obs": np.array(norm_obs),
        "actions": np.array(actions),
        "logp": np.array(logps),
        "rewards": np.array(rewards),
        "dones": np.array(dones, dtype=float),
        "final_obs": final_norm_obs,
        "final_done": bool(dones[-1]),
        "episode_returns": ep_returns,
        "episode_lengths": ep_lengths,
    }


def _assemble_batch(chunks, value_net, config):
    values_all, adv_all, ret_all = [], [], []
    for ch in chunks:
        values = value_net(ch["obs"])[:, 0]
        last_value = 0.0 if ch["final_done"] else float(
            value_net(ch["final_obs"][None, :])[0, 0])
        adv, ret = compute_gae(ch["rewards"], values, ch["dones"],
                               config.gamma, config.gae_lambda, last_value)
        values_all.append(values)
        adv_all.append(adv)
        ret_all.append(ret)
    batch = RolloutBatch(
        obs=np.concatenate([c["obs"] for c in chunks]),
        raw_obs=np.concatenate([c["raw_obs"] for c in chunks]),
        actions=np.concatenate([c["actions"] for c in chunks]),
        logp=np.concatenate([c["logp"] for c in chunks]),
        rewards=np.concatenate([c["rewards"] for c in chunks]),
        dones=np.concatenate([c["dones"] for c in chunks]),
        values=np.concatenate(values_all),
        advantages=np.concatenate(adv_all),
        returns=np.concatenate(ret_all),
        episode_returns=sum((c["episode_returns"] for c in chunks), []),
        episode_lengths=sum((c["episode_lengths"] for c in chunks), []),
    )
    return batch


def train(env_factory, config=None, total_steps=200_000, workers=1, seed=0,
          checkpoint_path=None, curve_path=None, checkpoint_every=50,
          progress=None):
    """Run PPO and return (policy, value_net, obs_norm, learning_curve).

    ``env_factory(seed) -> env`` must be picklable when workers > 1. The
    curve is a list of per-update stat dicts; checkpoints and the CSV curve
    are written when paths are provided.
    """
    config = config or PpoConfig()
    probe = env_factory(seed)
    obs_dim = probe.reset().shape[0]
    act_dim = probe.action_dim
    del probe

    master = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    policy = PolicyNet(obs_dim, act_dim, hidden=config.hidden,
                       log_std=config.log_std, rng=master)
    value_net = Mlp([obs_dim, config.hidden, config.hidden, 1], rng=master)
    norm = RunningNorm(obs_dim, clip=config.obs_clip)
    policy_opt = Adam(policy.net.weights + policy.net.biases,
                      lr=config.learning_rate, eps=config.adam_epsilon)
    value_opt = Adam(value_net.weights + value_net.biases,
                     lr=config.learning_rate, eps=config.adam_epsilon)

    steps_per_chunk = int(math.ceil(config.sample_size / workers))
    curve = []
    steps_done = 0
    update = 0
    pool = None
    try:
        if workers > 1:
            pool = ProcessPoolExecutor(max_workers=workers,
                                       initializer=_worker_init,
                                       initargs=(env_factory,))
        else:
            _worker_init(env_factory)

        while steps_done < total_steps:
            update += 1
            payloads = []
            for chunk in range(workers):
                env_seed = int(np.random.SeedSequence(
                    [seed, update, chunk, 1]).generate_state(1)[0])
                action_seed = [seed, update, chunk, 2]
                payloads.append((policy.state_dict(), norm.to_dict(),
                                 steps_per_chunk, env_seed, action_seed))
            if pool is not None:
                chunks = list(pool.map(_collect_chunk, payloads))
            else:
                chunks = [_collect_chunk(p) for p in payloads]

            batch = _assemble_batch(chunks, value_net, config)
            update_rng = np.random.default_rng(
                np.random.SeedSequence([seed, update, 3]))
            stats = ppo_update(policy, value_net, batch, config, update_rng,
                               policy_opt, value_opt)
            norm.update(batch.raw_obs)   # applies from the next batch on
            steps_done += len(batch)

            row = {
                "update": update,
                "env_steps": steps_done,
                "episodes": len(batch.episode_returns),
                "mean_step_reward": float(np.mean(batch.rewards)),
                "mean_episode_reward": (float(np.mean(batch.episode_returns))
                                        if batch.episode_returns else float("nan")),
                "mean_episode_length": (float(np.mean(batch.episode_lengths))
                                        if batch.episode_lengths else float("nan")),
                **stats,
            }
            curve.append(row)
            if progress is not None:
                progress(row)
            if checkpoint_path and (update % checkpoint_every == 0):
                save_checkpoint(checkpoint_path, policy, value_net, norm, config)
    finally:
        if pool is not None:
            pool.shutdown()

    if checkpoint_path:
        save_checkpoint(checkpoint_path, policy, value_net, norm, config)
    if curve_path:
        write_curve(curve_path, curve)
    return policy, value_net, norm, curve


CURVE_COLUMNS = ("update", "env_steps", "episodes", "mean_step_reward",
                 "mean_episode_reward", "mean_episode_length", "policy_loss",
                 "value_loss", "clip_fraction", "approx_kl")


def write_curve(path, curve):
    with open(path, "w") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for row in curve:
            fh.write(",".join(repr(row[c]) for c in CURVE_COLUMNS) + "\n")


def save_checkpoint(path, policy, value_net, norm, config):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "policy_checkpoint",
        "policy": policy.state_dict(),
        "value": value_net.to_dict(),
        "obs_norm": norm.to_dict(),
        "config": {
            "hidden": config.hidden,
            "log_std": config.log_std,
            "gamma": config.gamma,
            "clip": config.clip,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "policy_checkpoint":
        raise ValueError("not a policy checkpoint file")
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    policy = PolicyNet(1, 1)
    policy.load_state_dict(doc["policy"])
    value_net = Mlp.from_dict(doc["value"])
    norm = RunningNorm.from_dict(doc["obs_norm"])
    return policy, value_net, norm, doc.get("config", {})
