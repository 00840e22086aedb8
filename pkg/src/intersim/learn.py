"""Stop/Go policy learning for robot vehicles.

The mixed-control problem is a POMDP: each RV inside the control zone
observes local traffic state and picks Stop or Go once per decision
interval; the simulator supplies transitions and a shared reward that
trades queue delay against discharge throughput. A single feed-forward
value network is shared by every RV and trained with double-DQN
(target network, uniform replay, epsilon-greedy collection).

The network and its backpropagation are implemented directly on numpy
arrays so analytic gradients can be audited against central finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demand import RV, Scenario, assign_penetration
from .dynamics import Phase, SimConfig, World
from .errors import DivergedLoss
from .metrics import EmissionParams, MetricsSummary, summarize_world
from .net import APPROACH_ORDER, IntersectionModel

OBS_DIM = 11
N_ACTIONS = 2  # 0 = Stop, 1 = Go

QUEUE_NORM = 20.0
WAIT_NORM = 120.0
WAIT_COMPONENT_CAP = 2.0
DIST_NORM = 30.0


# ---------------------------------------------------------------------------
# Observation and reward


def observe(world: World, rv, model: IntersectionModel) -> np.ndarray:
    """Local traffic observation for one RV inside the control zone.

    Layout (length 11): per-approach queue lengths (4, N/E/S/W order,
    normalized by 20), per-approach aggregate wait (4, s, normalized by
    120 and capped), box occupancy flag, ego distance to the box (/30),
    ego speed (/v0).
    """
    queues = [0.0] * 4
    waits = [0.0] * 4
    occupied = 0.0
    for v in world.active.values():
        if v.phase is Phase.IN_INTERSECTION:
            occupied = 1.0
            continue
        if v.phase is not Phase.APPROACHING:
            continue
        i = APPROACH_ORDER[model.lane(v.start_lane).approach]
        if v.speed < 0.1:
            queues[i] += 1.0
        waits[i] += v.waiting_accum
    v0 = world.config.idm.v0
    obs = np.empty(OBS_DIM)
    obs[0:4] = [q / QUEUE_NORM for q in queues]
    obs[4:8] = [min(w / WAIT_NORM, WAIT_COMPONENT_CAP) for w in waits]
    obs[8] = occupied
    obs[9] = max(rv.dist_to_box, 0.0) / DIST_NORM
    obs[10] = rv.speed / v0
    return obs


def reward_value(mean_zone_wait: float, discharged: int, conflict: bool,
                 wait_cap: float = 60.0, discharge_coef: float = 0.25,
                 discharge_norm: float = 5.0, conflict_penalty: float = 5.0) -> float:
    """Shared per-interval reward: low zone delay, high discharge, no conflicts."""
    r = -min(mean_zone_wait, wait_cap) / wait_cap
    r += discharge_coef * discharged / discharge_norm
    if conflict:
        r -= conflict_penalty
    return r


@dataclass(frozen=True)
class CounterSnapshot:
    """World counters captured at the start of a decision interval."""

    discharged: int
    conflict_events: int

    @classmethod
    def of(cls, world: World):
        return cls(discharged=world.discharged, conflict_events=world.conflict_events)


def mean_zone_wait(world: World) -> float:
    zone = world.zone_vehicles()
    if not zone:
        return 0.0
    return sum(v.waiting_accum for v in zone) / len(zone)


def reward(world_before: CounterSnapshot, world_after: World, rv=None, **constants) -> float:
    """Reward for the decision interval between two counter snapshots.

    Shared by every RV; the rv argument is accepted for interface
    symmetry but does not enter the value.
    """
    return reward_value(
        mean_zone_wait(world_after),
        world_after.discharged - world_before.discharged,
        world_after.conflict_events - world_before.conflict_events > 0,
        **constants,
    )


# ---------------------------------------------------------------------------
# Q-network (numpy MLP with explicit backprop)


class QNetwork:
    """Fully connected ReLU network mapping observations to action values."""

    def __init__(self, obs_dim=OBS_DIM, n_actions=N_ACTIONS, hidden=(512, 512, 512),
                 rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        sizes = [obs_dim] + list(hidden) + [n_actions]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = math.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.sizes = sizes

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(x)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < len(self.weights) - 1:
                a = np.maximum(a, 0.0)
        return a

    def _forward_cached(self, x: np.ndarray):
        a = np.atleast_2d(x)
        activations = [a]
        pre = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = np.maximum(z, 0.0) if i < len(self.weights) - 1 else z
            activations.append(a)
        return activations, pre

    def gradients(self, x: np.ndarray, dout: np.ndarray):
        """Backpropagate dL/d(output) to per-layer (dW, db) gradients."""
        activations, pre = self._forward_cached(x)
        dz = np.atleast_2d(dout)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = activations[i].T @ dz
            grads_b[i] = dz.sum(axis=0)
            if i > 0:
                da = dz @ self.weights[i].T
                dz = da * (pre[i - 1] > 0.0)
        return grads_w, grads_b

    def copy_from(self, other: "QNetwork"):
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "QNetwork":
        out = QNetwork.__new__(QNetwork)
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        out.sizes = list(self.sizes)
        return out


class Adam:
    def __init__(self, net: QNetwork, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self, net: QNetwork, grads_w, grads_b):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i in range(len(net.weights)):
            for params, grads, m, v in (
                (net.weights, grads_w, self.m_w, self.v_w),
                (net.biases, grads_b, self.m_b, self.v_b),
            ):
                m[i] = self.beta1 * m[i] + (1 - self.beta1) * grads[i]
                v[i] = self.beta2 * v[i] + (1 - self.beta2) * grads[i] ** 2
                params[i] -= self.lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + self.eps)


POLICY_FORMAT_VERSION = 1


class Policy:
    """Shared Stop/Go value policy: deterministic greedy evaluation plus
    versioned serialization."""

    def __init__(self, net: QNetwork):
        self.net = net

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)[0]

    def q_batch(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)

    def greedy_action(self, obs: np.ndarray) -> int:
        return int(np.argmax(self.q_values(obs)))

    def save(self, path):
        arrays = {"version": np.array([POLICY_FORMAT_VERSION]),
                  "sizes": np.array(self.net.sizes)}
        for i, (w, b) in enumerate(zip(self.net.weights, self.net.biases)):
            arrays[f"w{i}"] = w.astype(np.float32)
            arrays[f"b{i}"] = b.astype(np.float32)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "Policy":
        with np.load(path) as data:
            version = int(data["version"][0])
            if version != POLICY_FORMAT_VERSION:
                raise ValueError(f"unsupported policy format version {version}")
            sizes = data["sizes"].tolist()
            net = QNetwork.__new__(QNetwork)
            net.sizes = sizes
            net.weights = []
            net.biases = []
            for i in range(len(sizes) - 1):
                net.weights.append(data[f"w{i}"].astype(np.float64))
                net.biases.append(data[f"b{i}"].astype(np.float64))
        return cls(net)


def finite_difference_check(policy: Policy, obs: np.ndarray, tolerance: float = 1e-4,
                            step: float = 1e-5, coords_per_layer: int = 12,
                            rng=None) -> bool:
    """Audit analytic gradients against central finite differences.

    The scalar under test is a fixed random projection of the Q-vector.
    A sample of parameter coordinates in every layer is perturbed both
    ways; the check passes when all relative errors stay below the
    tolerance.
    """
    rng = np.random.default_rng(1234) if rng is None else rng
    net = policy.net
    proj = rng.normal(size=(1, net.sizes[-1]))
    grads_w, grads_b = net.gradients(obs, proj)

    def scalar() -> float:
        return float((net.forward(obs) * proj).sum())

    for i in range(len(net.weights)):
        for params, grads in ((net.weights[i], grads_w[i]), (net.biases[i], grads_b[i])):
            flat = params.reshape(-1)
            gflat = grads.reshape(-1)
            n = min(coords_per_layer, flat.size)
            idx = rng.choice(flat.size, size=n, replace=False)
            for j in idx:
                orig = flat[j]
                flat[j] = orig + step
                up = scalar()
                flat[j] = orig - step
                down = scalar()
                flat[j] = orig
                fd = (up - down) / (2 * step)
                an = gflat[j]
                denom = max(abs(fd), abs(an), 1e-8)
                if abs(fd - an) / denom > tolerance:
                    return False
    return True


# ---------------------------------------------------------------------------
# Replay buffer


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim=OBS_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.size = 0
        self._cursor = 0

    def push(self, obs, action, reward_, next_obs, done):
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(next_obs))
                and math.isfinite(reward_)):
            raise ValueError("non-finite experience rejected")
        i = self._cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward_
        self.next_obs[i] = next_obs
        self.dones[i] = 1.0 if done else 0.0
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self):
        return self.size

    def sample(self, batch_size: int, rng):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx], self.dones[idx])


def double_dqn_targets(online: QNetwork, target: QNetwork, rewards, next_obs,
                       dones, discount: float) -> np.ndarray:
    """Regression targets: r + delta * Q_target(s', argmax_a Q_online(s', a))."""
    next_q_online = online.forward(next_obs)
    best = np.argmax(next_q_online, axis=1)
    next_q_target = target.forward(next_obs)
    bootstrap = next_q_target[np.arange(len(best)), best]
    return rewards + discount * bootstrap * (1.0 - dones)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    discount: float = 0.99
    iterations: int = 1000
    hidden: tuple = (512, 512, 512)
    buffer_capacity: int = 100_000
    batch_size: int = 64
    target_sync: int = 10          # iterations between target network syncs
    updates_per_iteration: int = 16
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.6      # fraction of iterations over which eps decays
    decision_interval: float = 1.0
    dt: float = 0.1
    seed: int = 0
    # reward shaping constants (kept here for ablation)
    wait_cap: float = 60.0
    discharge_coef: float = 0.25
    discharge_norm: float = 5.0
    conflict_penalty: float = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")

    def epsilon(self, iteration: int) -> float:
        horizon = max(1, int(self.iterations * self.eps_fraction))
        frac = min(1.0, iteration / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def reward_constants(self):
        return dict(wait_cap=self.wait_cap, discharge_coef=self.discharge_coef,
                    discharge_norm=self.discharge_norm,
                    conflict_penalty=self.conflict_penalty)


def _sim_config(scenario: Scenario, cfg: TrainConfig) -> SimConfig:
    return SimConfig(dt=cfg.dt, duration=scenario.duration, seed=cfg.seed)


def collect_episode(scenario: Scenario, policy: Policy, cfg: TrainConfig,
                    epsilon: float, rng, buffer: ReplayBuffer | None):
    """Roll out one episode; optionally fill the replay buffer.

    All RVs share the policy. Decisions happen once per interval; the
    shared interval reward is credited to every RV that acted.
    """
    from .control import MixedController

    model = scenario.model
    controller = MixedController(model, action_fn=None,
                                 decision_interval=cfg.decision_interval)
    world = World(model, scenario, _sim_config(scenario, cfg), controller)
    steps_per_decision = max(1, int(round(cfg.decision_interval / cfg.dt)))
    n_intervals = int(scenario.duration / cfg.decision_interval)

    episode_return = 0.0
    pending = []  # (vehicle_id, obs, action) awaiting reward + next obs
    for _ in range(n_intervals):
        in_zone = {v.vehicle_id: v for v in world.zone_vehicles() if v.vclass == RV}
        # close out experiences opened at the previous decision
        if pending:
            for vid, obs, action, r in pending:
                v = world.active.get(vid)
                still = vid in in_zone
                nxt = observe(world, v, model) if still else np.zeros(OBS_DIM)
                if buffer is not None:
                    buffer.push(obs, action, r, nxt, not still)
        pending = []

        actions = {}
        acted = []
        for vid, v in sorted(in_zone.items()):
            obs = observe(world, v, model)
            if rng.random() < epsilon:
                action = int(rng.integers(0, N_ACTIONS))
            else:
                action = policy.greedy_action(obs)
            actions[vid] = action
            acted.append((vid, obs, action))
        controller.apply_commands(actions)

        before = CounterSnapshot.of(world)
        for _ in range(steps_per_decision):
            world.step()
        r = reward(before, world, **cfg.reward_constants())
        episode_return += r
        pending = [(vid, obs, action, r) for vid, obs, action in acted]

    if pending and buffer is not None:
        for vid, obs, action, r in pending:
            buffer.push(obs, action, r, np.zeros(OBS_DIM), True)
    return episode_return, world


def train(scenario: Scenario, p: float, cfg: TrainConfig,
          episode_scenarios=None):
    """Train the shared Stop/Go policy with double-DQN.

    Returns (policy, curve) where curve rows are
    (iteration, episode_return, mean_loss, epsilon). Deterministic per
    cfg.seed. `episode_scenarios` optionally supplies a per-iteration
    scenario (callable iteration -> Scenario) for domain variation; by
    default every episode replays `scenario` with penetration p.
    """
    if p <= 0.0 and episode_scenarios is None:
        raise ValueError("training needs robot vehicles (p > 0)")
    rng = np.random.default_rng(cfg.seed)
    net = QNetwork(hidden=cfg.hidden, rng=rng)
    target = net.clone()
    policy = Policy(net)
    optimizer = Adam(net, lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    base = assign_penetration(scenario, p, cfg.seed) if episode_scenarios is None else None

    curve = []
    for it in range(cfg.iterations):
        eps = cfg.epsilon(it)
        episode = base if episode_scenarios is None else episode_scenarios(it)
        ep_return, _ = collect_episode(episode, policy, cfg, eps, rng, buffer)

        losses = []
        if len(buffer) >= cfg.batch_size:
            for _ in range(cfg.updates_per_iteration):
                obs, actions, rewards, next_obs, dones = buffer.sample(cfg.batch_size, rng)
                y = double_dqn_targets(net, target, rewards, next_obs, dones, cfg.discount)
                q = net.forward(obs)
                picked = q[np.arange(len(actions)), actions]
                err = picked - y
                loss = float(np.mean(err ** 2))
                if not math.isfinite(loss):
                    raise DivergedLoss(
                        f"loss diverged at iteration {it} (loss={loss}, "
                        f"|err|max={np.abs(err).max():.3g})"
                    )
                dq = np.zeros_like(q)
                dq[np.arange(len(actions)), actions] = 2.0 * err / len(actions)
                grads_w, grads_b = net.gradients(obs, dq)
                optimizer.step(net, grads_w, grads_b)
                losses.append(loss)
        if (it + 1) % cfg.target_sync == 0:
            target.copy_from(net)
        curve.append((it, ep_return, sum(losses) / len(losses) if losses else 0.0, eps))
    return policy, curve


def save_training_curve(curve, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,episode_return,loss,epsilon\n")
        for it, ret, loss, eps in curve:
            fh.write(f"{it},{ret:.6f},{loss:.6f},{eps:.4f}\n")


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(policy: Policy | None, scenario: Scenario, cfg: SimConfig,
             emission: EmissionParams = EmissionParams(),
             decision_interval: float = 1.0) -> MetricsSummary:
    """Greedy rollout of the mixed controller; returns the metrics summary.

    With no RVs in the scenario the policy is never queried and the run
    equals plain unsignalized operation.
    """
    from .control import MixedController

    action_fn = None
    if policy is not None:
        def action_fn(world, rv, _policy=policy):
            return _policy.greedy_action(observe(world, rv, world.model))

    controller = MixedController(scenario.model, action_fn=action_fn,
                                 decision_interval=decision_interval)
    world = World(scenario.model, scenario, cfg, controller)
    world.attach_emissions(emission)
    world.run()
    return summarize_world(world)


def penetration_sweep(policy: Policy, scenario: Scenario, rates, cfg: SimConfig,
                      seed: int = 0):
    """Evaluate the policy across penetration rates; rows for the
    comparison table."""
    rows = []
    for p in rates:
        scn = assign_penetration(scenario, p, seed)
        summary = evaluate(policy if p > 0 else None, scn, cfg)
        rows.append((f"p={p:g}", summary))
    return rows
