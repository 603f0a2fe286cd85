"""Poisoning attacks on implicit-feedback recommenders.

Heuristic baselines (random, bandwagon), the differentiable rank-promotion
loss, the dispersion-promotion objective, gradient ascent over relaxed
malicious interaction weights, greedy discretization, and the alternating
bi-level loop that ties them together.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError
from .graph import build_graph
from .metrics import hit_ratio_at_k, ndcg_at_k
from .model import recommend_topk, train
from .spectral import dispersion_gradient, dispersion_loss, draw_deflation


@dataclass(eq=False)
class MaliciousProfile:
    """Injected users: discretized item sets plus optional relaxed weights."""

    budget: object
    items: list
    weights: np.ndarray = None

    def __post_init__(self):
        targets = self.budget.target_items
        if len(self.items) != self.budget.n_malicious:
            raise ValueError("profile row count does not match budget")
        self.items = [np.sort(np.asarray(row, dtype=np.int64)) for row in self.items]
        for row in self.items:
            if len(row) > self.budget.per_user_budget:
                raise ValueError("per-user interaction budget exceeded")
            if not np.isin(targets, row).all():
                raise ValueError("profile row is missing target items")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.min() < 0 or self.weights.max() > 1:
                raise ValueError("relaxed weights must lie in [0, 1]")
            if not (self.weights[:, targets] == 1.0).all():
                raise ValueError("target columns must stay pinned at 1")

    @property
    def n_users(self):
        return self.budget.n_malicious

    def as_weights(self, n_items):
        w = np.zeros((self.n_users, n_items))
        for row, its in enumerate(self.items):
            w[row, its] = 1.0
        return w

    def to_json(self):
        return {str(row): [int(i) for i in its] for row, its in enumerate(self.items)}


@dataclass
class AttackConfig:
    alpha: float = 1.0
    rounds: int = 5
    inner_epochs: int = 20
    outer_steps: int = 50
    step_size: float = 0.01
    user_sample: int = None
    k: int = 50
    seed: int = 0
    stacked: bool = False
    use_dispersion: bool = True
    redraw_v: bool = True
    refreeze_degrees: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.rounds < 1 or self.inner_epochs < 1:
            raise ValueError("rounds and inner_epochs must be >= 1")
        if self.outer_steps < 0:
            raise ValueError("outer_steps must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.user_sample is not None and self.user_sample < 1:
            raise ValueError("user_sample must be >= 1 when set")
        if not self.use_dispersion and self.alpha == 0:
            raise ValueError("attack objective is empty")

    @property
    def tag(self):
        if not self.use_dispersion:
            return "CLeaR_R"
        if self.alpha == 0:
            return "CLeaR_D"
        return "CLeaR_{D+R}"


def random_attack(budget, ds, seed=0):
    """Target items plus uniformly sampled non-target fillers per user."""
    rng = np.random.default_rng(seed)
    targets = budget.target_items
    pool = np.setdiff1d(np.arange(ds.n_items), targets)
    n_fill = min(budget.per_user_budget - len(targets), len(pool))
    rows = []
    for _ in range(budget.n_malicious):
        fill = rng.choice(pool, size=n_fill, replace=False)
        rows.append(np.concatenate([targets, fill]))
    return MaliciousProfile(budget=budget, items=rows)


def bandwagon_attack(budget, ds, popular_fraction=0.1, seed=0):
    """Fillers drawn from the most popular train items instead of uniformly."""
    if not 0 < popular_fraction <= 1:
        raise ValueError("popular_fraction must lie in (0, 1]")
    from .data import popularity_ranking

    rng = np.random.default_rng(seed)
    targets = budget.target_items
    top = int(np.ceil(popular_fraction * ds.n_items))
    pool = np.setdiff1d(popularity_ranking(ds)[:top], targets)
    if len(pool) == 0:
        raise ValueError("popular pool contains only target items")
    n_fill = budget.per_user_budget - len(targets)
    rows = []
    for _ in range(budget.n_malicious):
        if len(pool) <= n_fill:
            fill = pool
        else:
            fill = rng.choice(pool, size=n_fill, replace=False)
        rows.append(np.concatenate([targets, fill]))
    return MaliciousProfile(budget=budget, items=rows)


def _cw_thresholds(scores, targets, train_rows, k):
    """Per-user k-th best score among non-target, non-interacted items.

    Users with fewer than k such items fall back to their lowest available
    score; users with none are flagged invalid and skipped by the loss.
    """
    masked = scores.copy()
    masked[:, targets] = -np.inf
    masked[train_rows] = -np.inf
    order = np.argsort(-masked, axis=1, kind="stable")
    avail = np.isfinite(masked).sum(axis=1)
    valid = avail > 0
    pick = np.where(valid, np.minimum(k, avail) - 1, 0)
    rows = np.arange(scores.shape[0])
    thr_item = order[rows, pick]
    thr_val = masked[rows, thr_item]
    return thr_val, thr_item, valid


def _cw_terms(z_user, z_item, targets, k, users, train_mask):
    users = np.asarray(users, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    scores = z_user[users] @ z_item.T
    thr_val, thr_item, valid = _cw_thresholds(scores, targets, train_mask[users], k)
    eligible = ~train_mask[users][:, targets] & valid[:, None]
    margins = scores[:, targets] - thr_val[:, None]
    return margins, eligible, thr_item, users, targets


def cw_rank_loss(z_user, z_item, targets, k, users, train_mask):
    """Sum over eligible (user, target) pairs of g(target score - list cutoff).

    g(x) = x for x >= 0, e^x - 1 below: linear once the target clears the
    k-th ranked competitor, saturating when far under it.
    """
    margins, eligible, _, _, _ = _cw_terms(z_user, z_item, targets, k, users, train_mask)
    vals = np.where(margins >= 0, margins, np.expm1(margins))
    return float(vals[eligible].sum())


def cw_rank_gradient(z_user, z_item, targets, k, users, train_mask):
    """Gradient of cw_rank_loss w.r.t. both embedding matrices.

    The cutoff item of each user is held fixed at its current identity, which
    is the a.e. derivative of the piecewise-smooth loss.
    """
    margins, eligible, thr_item, users, targets = _cw_terms(
        z_user, z_item, targets, k, users, train_mask)
    slope = np.where(margins >= 0, 1.0, np.exp(margins))
    slope = np.where(eligible, slope, 0.0)
    grad_user = np.zeros_like(z_user)
    grad_item = np.zeros_like(z_item)
    row_mass = slope.sum(axis=1)
    grad_user[users] = slope @ z_item[targets] - row_mass[:, None] * z_item[thr_item]
    np.add.at(grad_item, targets, slope.T @ z_user[users])
    np.add.at(grad_item, thr_item, -row_mass[:, None] * z_user[users])
    return grad_user, grad_item


def draw_attack_deflation(z_user, z_item, rng, stacked=False):
    """Fresh random deflation state(s) for the current representations."""
    if stacked:
        return {"stacked": draw_deflation(np.vstack([z_user, z_item]), rng)}
    return {"user": draw_deflation(z_user, rng), "item": draw_deflation(z_item, rng)}


def attack_loss(z_user, z_item, deflations, targets, k, users, train_mask, config):
    """Combined objective: dispersion promotion plus alpha * rank promotion."""
    l_d = 0.0
    if config.use_dispersion:
        if config.stacked:
            l_d = dispersion_loss(np.vstack([z_user, z_item]), deflations["stacked"])
        else:
            l_d = dispersion_loss(z_user, deflations["user"]) + dispersion_loss(
                z_item, deflations["item"])
    l_r = 0.0
    if config.alpha > 0:
        l_r = cw_rank_loss(z_user, z_item, targets, k, users, train_mask)
    return l_d + config.alpha * l_r, l_d, l_r


class FrozenMap:
    """Differentiable propagation with degrees frozen at an anchor weight matrix.

    The forward map applies the same layer-averaged propagation as training,
    but only the malicious-block entries of the adjacency vary with w; the
    symmetric normalization keeps the anchor degrees. At the anchor itself the
    output coincides with the training-time propagation of the base
    embeddings. MF victims get a single virtual propagation layer so edge
    weights influence the representation at all.
    """

    def __init__(self, ds, state, w, targets):
        self.n_genuine = ds.n_users
        self.n_mal = w.shape[0]
        self.n_items = ds.n_items
        self.layers = max(1, state.effective_layers)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.emb = np.vstack([state.user_emb, state.item_emb])
        if self.emb.shape[0] != self.n_genuine + self.n_mal + self.n_items:
            raise ValueError("state does not include the malicious user rows")
        mu, mi = np.nonzero(w > 0)
        anchor = build_graph(ds, self.n_mal, (mu, mi, w[mu, mi]))
        self.adj = anchor.adj
        s = anchor.inv_sqrt_deg
        rows = self.n_genuine + self.n_mal
        self.scale = np.outer(s[self.n_genuine : rows], s[rows:])
        self.w0 = w.copy()
        self._mal = slice(self.n_genuine, rows)
        self._items = slice(rows, None)

    def _apply(self, delta, h):
        out = self.adj @ h
        out[self._mal] += delta @ h[self._items]
        out[self._items] += delta.T @ h[self._mal]
        return out

    def forward(self, w):
        """Propagated (user block, item block, layer tape) at weights w."""
        delta = (w - self.w0) * self.scale
        tape = [self.emb]
        h = self.emb
        for _ in range(self.layers):
            h = self._apply(delta, h)
            tape.append(h)
        z = sum(tape) / len(tape)
        split = self.n_genuine + self.n_mal
        return z[:split], z[split:], tape

    def backward(self, grad_user, grad_item, tape, w):
        """Chain the representation gradient back to the malicious weights."""
        delta = (w - self.w0) * self.scale
        g = np.vstack([grad_user, grad_item]) / (self.layers + 1)
        u = g.copy()
        grad_w = np.zeros_like(w)
        for layer in range(self.layers, 0, -1):
            h_prev = tape[layer - 1]
            grad_w += (u[self._mal] @ h_prev[self._items].T
                       + h_prev[self._mal] @ u[self._items].T) * self.scale
            u = self._apply(delta, u) + g
        grad_w[:, self.targets] = 0.0
        return grad_w


def outer_gradient(fmap, w, deflations, users, train_mask, config):
    """Loss and its gradient w.r.t. the relaxed weights through the frozen map.

    Deflation directions are treated as constants of the step. Pinned target
    columns always receive zero gradient.
    """
    z_user, z_item, tape = fmap.forward(w)
    total, l_d, l_r = attack_loss(
        z_user, z_item, deflations, fmap.targets, config.k, users, train_mask, config)
    grad_u = np.zeros_like(z_user)
    grad_i = np.zeros_like(z_item)
    if config.use_dispersion:
        if config.stacked:
            g = dispersion_gradient(np.vstack([z_user, z_item]), deflations["stacked"])
            grad_u += g[: len(z_user)]
            grad_i += g[len(z_user) :]
        else:
            grad_u += dispersion_gradient(z_user, deflations["user"])
            grad_i += dispersion_gradient(z_item, deflations["item"])
    if config.alpha > 0:
        cw_u, cw_i = cw_rank_gradient(
            z_user, z_item, fmap.targets, config.k, users, train_mask)
        grad_u += config.alpha * cw_u
        grad_i += config.alpha * cw_i
    grad_w = fmap.backward(grad_u, grad_i, tape, w)
    if not np.isfinite(grad_w).all() or not np.isfinite(total):
        raise NumericError("non-finite outer gradient")
    return grad_w, total, l_d, l_r


def greedy_discretize(w, budget):
    """Targets unconditionally, then the heaviest positive-weight fillers.

    Ties break toward the lower item index; zero-weight items never become
    fillers, so an untouched weight matrix discretizes to targets only.
    """
    targets = budget.target_items
    slots = budget.per_user_budget - len(targets)
    rows = []
    for r in range(w.shape[0]):
        row = w[r].copy()
        row[targets] = 0.0
        cand = np.nonzero(row > 0)[0]
        order = cand[np.lexsort((cand, -row[cand]))]
        rows.append(np.concatenate([targets, order[:slots]]))
    return rows


def _ascend(ds, state, w, targets, users, train_mask, config, rng):
    """Gradient ascent on the relaxed weights.

    Returns (w, L_D, L_R, step records); a record carries the pre-step loss,
    the loss after the move, and whether the proposal was accepted.
    """
    fmap = FrozenMap(ds, state, w, targets)
    z_user, z_item, _ = fmap.forward(w)
    defl = draw_attack_deflation(z_user, z_item, rng, config.stacked)
    if config.outer_steps == 0:
        _, l_d, l_r = attack_loss(
            z_user, z_item, defl, targets, config.k, users, train_mask, config)
        return w, l_d, l_r, []
    step = config.step_size
    records = []
    l_d = l_r = 0.0
    for t in range(config.outer_steps):
        if t > 0 and config.refreeze_degrees:
            fmap = FrozenMap(ds, state, w, targets)
        if t > 0 and config.redraw_v:
            z_user, z_item, _ = fmap.forward(w)
            defl = draw_attack_deflation(z_user, z_item, rng, config.stacked)
        if config.user_sample is not None and config.user_sample < len(users):
            step_users = rng.choice(users, size=config.user_sample, replace=False)
        else:
            step_users = users
        grad, total, l_d, l_r = outer_gradient(fmap, w, defl, step_users, train_mask, config)
        moved = None
        trial = step
        for _ in range(5):
            cand = np.clip(w + trial * grad, 0.0, 1.0)
            cand[:, targets] = 1.0
            cu, ci, _ = fmap.forward(cand)
            cand_total, cand_d, cand_r = attack_loss(
                cu, ci, defl, targets, config.k, step_users, train_mask, config)
            if cand_total >= total:
                w = cand
                l_d, l_r = cand_d, cand_r
                step = trial
                moved = cand_total
                break
            trial /= 2.0
        else:
            step = trial
        records.append({"step": t, "before": total,
                        "after": moved if moved is not None else total,
                        "accepted": moved is not None})
    return w, l_d, l_r, records


def clear_attack(ds, victim_config, attack_config, budget):
    """Alternate victim retraining with ascent over relaxed injected interactions.

    Starts from targets-only profiles. Each round retrains the victim on the
    current poisoned data (warm-started embeddings, fresh optimizer), relaxes
    the profile to continuous weights, runs outer ascent with the deflation
    direction redrawn per step, and greedily re-discretizes. Stops early after
    two rounds without train-visible promotion improvement. Returns the final
    profile plus a per-round trace of (dispersion loss, rank loss, hit ratio);
    a non-finite loss aborts the loop with the partial trace preserved.
    """
    rng = np.random.default_rng(attack_config.seed)
    targets = budget.target_items
    profile = MaliciousProfile(
        budget=budget, items=[targets.copy() for _ in range(budget.n_malicious)])
    users = np.arange(ds.n_users)
    trace = []
    warm = None
    best_hr = -np.inf
    stalled = 0
    for rnd in range(attack_config.rounds):
        inner_cfg = replace(
            victim_config,
            epochs=attack_config.inner_epochs,
            seed=victim_config.seed + rnd,
        )
        try:
            result = train(ds, inner_cfg, malicious=profile, init_emb=warm)
            warm = (result.state.user_emb.copy(), result.state.item_emb.copy())
            lists = recommend_topk(result.state, result.graph, ds, attack_config.k)
            hr = hit_ratio_at_k(lists, targets, ds.train_mask)
            w = profile.as_weights(ds.n_items)
            w, l_d, l_r, _ = _ascend(
                ds, result.state, w, targets, users, ds.train_mask, attack_config, rng)
        except NumericError as err:
            trace.append({"round": rnd, "error": str(err)})
            break
        profile = MaliciousProfile(
            budget=budget, items=greedy_discretize(w, budget), weights=w)
        trace.append({"round": rnd, "dispersion": l_d, "rank": l_r, "hit_ratio": hr})
        if hr > best_hr + 1e-12:
            best_hr = hr
            stalled = 0
        else:
            stalled += 1
            if stalled >= 2:
                break
    return profile, trace


def blackbox_transfer(ds, surrogate_config, victim_config, attack_config, budget):
    """Optimize the profile against a surrogate, evaluate on an unseen victim."""
    profile, trace = clear_attack(ds, surrogate_config, attack_config, budget)
    victim = train(ds, victim_config, malicious=profile)
    lists = recommend_topk(victim.state, victim.graph, ds, attack_config.k)
    targets = budget.target_items
    return {
        "surrogate": surrogate_config.tag,
        "victim": victim_config.tag,
        "hit_ratio": hit_ratio_at_k(lists, targets, ds.train_mask),
        "ndcg": ndcg_at_k(lists, targets, ds.train_mask, attack_config.k),
        "profile": profile,
        "trace": trace,
    }
