"""Fitting, source-free adaptation, evaluation, and fold enumeration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .model import Heegnet

MAX_GROUPS = 10


@dataclass
class FitResult:
    model: Heegnet
    history: list
    best_epoch: int
    best_score: float


@dataclass
class EvalResult:
    balanced_accuracy: float
    per_class_recall: dict
    excluded_classes: list
    unseen_domains: set
    per_domain: dict


def balanced_accuracy(y_true, y_pred, n_classes):
    """Mean per-class recall; classes absent from y_true are excluded and flagged."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValidationError("label arrays must have matching shapes")
    recalls, excluded = {}, []
    for c in range(n_classes):
        mask = y_true == c
        if not np.any(mask):
            excluded.append(c)
            continue
        recalls[c] = float(np.mean(y_pred[mask] == c))
    if not recalls:
        raise ValidationError("no ground-truth classes present")
    return float(np.mean(list(recalls.values()))), recalls, excluded


def stratified_split(labels, domains, val_fraction, rng):
    """Per-(domain, class) split into train/validation index arrays."""
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    train_idx, val_idx = [], []
    for d in sorted(set(domains.tolist())):
        for c in sorted(set(labels.tolist())):
            cell = np.nonzero((domains == d) & (labels == c))[0]
            if cell.size == 0:
                continue
            cell = rng.permutation(cell)
            n_val = int(round(val_fraction * cell.size))
            if cell.size >= 2:
                n_val = min(max(n_val, 1), cell.size - 1)
            else:
                n_val = 0
            val_idx.append(cell[:n_val])
            train_idx.append(cell[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def domain_round_robin_batches(domains, batch_size, rng):
    """Minibatches as unions of per-domain sub-batches.

    Each step takes ceil(batch/num_domains) samples from every domain in
    round-robin order, dropping a domain for that step when fewer than two
    of its samples remain (per-domain statistics need at least two).
    """
    domains = np.asarray(domains)
    ids = sorted(set(domains.tolist()))
    per = -(-batch_size // len(ids))
    per = max(per, 2)
    pools = {d: rng.permutation(np.nonzero(domains == d)[0]).tolist() for d in ids}
    while True:
        batch = []
        for d in ids:
            pool = pools[d]
            if len(pool) < 2:
                continue
            take = min(per, len(pool))
            if take == len(pool) - 1:
                take = len(pool)  # avoid leaving a single stranded sample
            batch.extend(pool[:take])
            pools[d] = pool[take:]
        if not batch:
            return
        yield np.asarray(batch)


def enumerate_folds(domain_ids, policy="auto"):
    """(source_domains, target_domains) pairs for leave-groups-out validation."""
    ids = sorted(set(int(d) for d in domain_ids))
    if len(ids) < 2:
        raise ValidationError("need at least 2 domains to form folds")
    if policy == "auto":
        policy = "leave-one-out" if len(ids) <= MAX_GROUPS else "leave-groups-out"
    if policy == "leave-one-out":
        return [([d for d in ids if d != t], [t]) for t in ids]
    if policy == "leave-groups-out":
        n_groups = min(MAX_GROUPS, len(ids))
        groups = [list(ids[g::n_groups]) for g in range(n_groups)]
        return [([d for d in ids if d not in g], g) for g in groups]
    raise ValidationError(f"unknown fold policy {policy!r}")


def _check_cells(labels, domains, n_classes):
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    for d in sorted(set(domains.tolist())):
        present = set(labels[domains == d].tolist())
        missing = [c for c in range(n_classes) if c not in present]
        if missing:
            raise ValidationError(f"domain {d} has no samples for class(es) {missing}")


def fit(model, epochs_data, labels, domains, n_epochs=100, batch_size=64, lr=1e-3,
        patience=10, val_fraction=0.2, seed=0, verbose=False):
    """Train on labeled multi-domain data with early stopping.

    Uses a single stratified (domain and label) inner train/validation
    split, domain round-robin minibatches, Adam updates, and keeps the
    checkpoint of the best inner-validation balanced accuracy.
    """
    x = np.asarray(epochs_data, dtype=np.float64)
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    source_domains = sorted(set(domains.tolist()))
    if len(source_domains) < 2:
        raise ValidationError("need at least 2 source domains")
    _check_cells(labels, domains, model.config.n_classes)
    ss = np.random.SeedSequence(seed)
    split_rng, batch_rng, drop_rng, loss_rng = (np.random.default_rng(s) for s in ss.spawn(4))
    train_idx, val_idx = stratified_split(labels, domains, val_fraction, split_rng)
    model.source_domains = [int(d) for d in source_domains]
    opt = ad.Adam(model.tape, lr=lr)
    history = []
    best_score, best_epoch, best_state = -np.inf, -1, None
    for epoch in range(n_epochs):
        epoch_parts = []
        for batch_idx in domain_round_robin_batches(domains[train_idx], batch_size, batch_rng):
            sel = train_idx[batch_idx]
            loss, parts = model.training_loss(x[sel], labels[sel], domains[sel], drop_rng)
            opt.zero_grad()
            model.tape.backward(loss)
            opt.step()
            epoch_parts.append(parts)
        preds = model.predict(x[val_idx], domains[val_idx])
        score, _, _ = balanced_accuracy(labels[val_idx], preds, model.config.n_classes)
        mean_parts = {
            k: float(np.mean([p[k] for p in epoch_parts])) for k in epoch_parts[0]
        } if epoch_parts else {}
        history.append({"epoch": epoch, "val_balanced_accuracy": score, **mean_parts})
        if verbose:
            print(f"epoch {epoch:3d}  val balacc {score:.4f}  " +
                  "  ".join(f"{k} {v:.4f}" for k, v in mean_parts.items()))
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_state = model.get_state()
        if epoch - best_epoch >= patience:
            break
    if best_state is not None:
        model.set_state(best_state)
    return FitResult(model=model, history=history, best_epoch=best_epoch, best_score=best_score)


def sfuda_adapt(model, epochs_data, domains, passes=10, batch_size=64):
    """Source-free adaptation: estimate per-domain statistics on unlabeled data.

    The feature extractor and classifier stay frozen; only new per-domain
    running statistics are folded into the test track.  Target domains must
    be disjoint from the model's source domains.  The stream order is
    deterministic (sorted domains, dataset order within each domain).
    """
    if model.dbn is None:
        return model
    x = np.asarray(epochs_data, dtype=np.float64)
    domains = np.asarray(domains)
    targets = sorted(set(domains.tolist()))
    overlap = set(targets) & set(model.source_domains)
    if overlap:
        raise ValidationError(f"target domains overlap source domains: {sorted(overlap)}")
    for _ in range(passes):
        for d in targets:
            idx = np.nonzero(domains == d)[0]
            for start in range(0, idx.size, batch_size):
                sel = idx[start : start + batch_size]
                if sel.size < 2:
                    continue
                model.forward(x[sel], domains[sel], mode="adapt")
    return model


def evaluate(model, epochs_data, labels, domains, batch_size=256):
    """Balanced accuracy with per-class recall, per-domain scores, and flags."""
    x = np.asarray(epochs_data, dtype=np.float64)
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    logits, unseen = model.predict_logits(x, domains, batch_size)
    preds = np.argmax(logits, axis=1)
    score, recalls, excluded = balanced_accuracy(labels, preds, model.config.n_classes)
    per_domain = {}
    for d in sorted(set(domains.tolist())):
        mask = domains == d
        d_score, _, _ = balanced_accuracy(labels[mask], preds[mask], model.config.n_classes)
        per_domain[int(d)] = d_score
    return EvalResult(
        balanced_accuracy=score,
        per_class_recall=recalls,
        excluded_classes=excluded,
        unseen_domains=unseen,
        per_domain=per_domain,
    )
