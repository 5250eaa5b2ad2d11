"""Training, evaluation, and relabel-audit orchestration.

One run directory per training invocation:

    config.json          full config plus its hash
    metrics.jsonl        one "run" line, one "epoch" line per epoch, one "final" line
    checkpoint.pt        model state and template/adjacency snapshots
    au-adjacency.txt     normalized graph actually used (AU branch only)
    relabel-audit.jsonl  every gated relabel decision (relabeling only)

Nothing time-dependent is written, so two runs with identical config and
manifest produce byte-identical metrics files.

Per batch the order is: backbone features, confidence scores, class logits,
AU semantics, template update from detached centers, relabeling (corrections
take effect for this very batch and persist), then the losses. The AU branch
consumes detached features and detached confidence scores, so AU supervision
never moves the backbone or the confidence head.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import losses
from .au_graph import GCNStack, export_adjacency, make_adjacency, semantic_forward
from .batching import epoch_permutation
from .manifest import DatasetManifest
from .memory import GateConfig, MemoryTemplate, batch_centers, relabel
from .model import (
    ClassifierHead,
    ConfidenceHead,
    VAHead,
    build_backbone,
    load_checkpoint,
    predict_classes,
    save_checkpoint,
)
from .synth import FlipMask

BRANCH_PRESETS = {
    "none": dict(use_confidence=False, use_va=False, use_au=False, use_relabel=False),
    "t": dict(use_confidence=True, use_va=False, use_au=False, use_relabel=False),
    "t+va": dict(use_confidence=True, use_va=True, use_au=False, use_relabel=False),
    "t+au": dict(use_confidence=True, use_va=False, use_au=True, use_relabel=True),
    "full": dict(use_confidence=True, use_va=True, use_au=True, use_relabel=True),
}


class TrainingDivergence(RuntimeError):
    """Raised when a loss goes non-finite; a diagnostic snapshot is written first."""


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=64, ge=1)
    seed: int = 0
    feature_dim: int = Field(default=64, ge=1)
    hidden_dim: int = Field(default=128, ge=1)
    gcn_channels: int = Field(default=64, ge=1)
    use_confidence: bool = True
    use_va: bool = True
    use_au: bool = True
    use_relabel: bool = True
    ramp_epochs: int = Field(default=5, ge=1)
    tau: float = Field(default=0.9, gt=0.0, le=1.0)
    relabel_start_epoch: int = Field(default=10, ge=0)
    gate_quantile: float = Field(default=0.2, gt=0.0, le=1.0)
    gamma_placement: Literal["va", "target"] = "va"
    edge_mode: Literal["data", "random", "fixed"] = "data"
    template_mode: Literal["global", "epoch_reset"] = "global"
    lr: float = Field(default=0.01, gt=0.0)
    lr_drops: list[tuple[int, float]] = [(10, 1e-3), (20, 1e-4)]
    au_lr: float = Field(default=0.005, gt=0.0)

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.use_relabel and not self.use_au:
            raise ValueError("relabeling compares samples to AU semantic templates; enable the AU branch")
        return self

    @classmethod
    def from_branches(cls, branches: str, **overrides) -> "TrainConfig":
        if branches not in BRANCH_PRESETS:
            raise ValueError(f"unknown branch preset {branches!r}; expected one of {sorted(BRANCH_PRESETS)}")
        return cls(**{**BRANCH_PRESETS[branches], **overrides})

    def branch_name(self) -> str:
        flags = dict(
            use_confidence=self.use_confidence,
            use_va=self.use_va,
            use_au=self.use_au,
            use_relabel=self.use_relabel,
        )
        for name, preset in BRANCH_PRESETS.items():
            if preset == flags:
                return name
        return "custom"


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def strategy_key(config_dict: dict) -> str:
    """Config identity with the seed removed; runs sharing it are replicates."""
    stripped = {k: v for k, v in config_dict.items() if k != "seed"}
    return json.dumps(stripped, sort_keys=True)


@dataclass
class TrainResult:
    out_dir: Path
    config_hash: str
    history: list[dict]
    final: dict
    checkpoint_path: Path


def _load_inputs(records, manifest: DatasetManifest) -> torch.Tensor:
    if manifest.mode == "feature":
        x = np.stack([r.features for r in records]).astype(np.float32)
        return torch.from_numpy(x)
    imgs = []
    for r in records:
        arr = np.load(r.image_path)
        if arr.shape != (32, 32):
            raise ValueError(f"image {r.image_path} has shape {arr.shape}, expected (32, 32)")
        imgs.append(arr.astype(np.float32))
    return torch.from_numpy(np.stack(imgs)).unsqueeze(1)


@dataclass
class _SplitData:
    x: torch.Tensor
    y: np.ndarray
    va: Optional[torch.Tensor]
    au: Optional[torch.Tensor]
    ids: list[str]


def _prepare(records, manifest: DatasetManifest) -> _SplitData:
    x = _load_inputs(records, manifest)
    y = np.array([r.emotion for r in records], dtype=np.int64)
    va = None
    if all(r.va_present for r in records):
        va = torch.tensor([[r.valence, r.arousal] for r in records], dtype=torch.float32)
    au = None
    if all(r.au_present for r in records):
        au = torch.from_numpy(np.stack([r.au for r in records]).astype(np.float32))
    return _SplitData(x=x, y=y, va=va, au=au, ids=[r.id for r in records])


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True)


def _f(x) -> Optional[float]:
    return None if x is None else float(x)


def train(
    config: TrainConfig,
    manifest: DatasetManifest,
    out_dir: str | Path,
    flip_mask: Optional[FlipMask] = None,
    tags: Optional[dict] = None,
    log=None,
) -> TrainResult:
    """Run the full loop and leave the artifacts listed in the module docstring."""
    if manifest.mode not in ("feature", "image"):
        raise ValueError(f"unknown manifest mode {manifest.mode!r}")
    if config.use_va and not manifest.va_available:
        raise ValueError("VA branch enabled but the train split lacks valence/arousal labels")
    if config.use_au and not manifest.au_available:
        raise ValueError("AU branch enabled but the train split lacks AU labels")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)

    torch.set_num_threads(1)

    train_recs = manifest.train_records
    test_recs = manifest.test_records
    if config.batch_size > len(train_recs):
        raise ValueError(f"batch_size {config.batch_size} exceeds train split size {len(train_recs)}")
    tr = _prepare(train_recs, manifest)
    te = _prepare(test_recs, manifest) if test_recs else None
    n_train = len(train_recs)
    C = manifest.taxonomy.num_classes
    M = manifest.au_count
    row_of = {sid: i for i, sid in enumerate(tr.ids)}
    working = tr.y.copy()  # corrected labels; relabeling mutates these in place

    torch.manual_seed(config.seed)
    backbone = build_backbone(manifest.mode, manifest.feature_dim, config.feature_dim, config.hidden_dim)
    conf_head = ConfidenceHead(config.feature_dim)
    clf_head = ClassifierHead(config.feature_dim, C)
    va_head = VAHead(config.feature_dim)
    gcn = GCNStack(config.feature_dim, M, config.gcn_channels)

    adjacency = None
    if config.use_au:
        au_train = np.stack([r.au for r in train_recs])
        adjacency = make_adjacency(
            config.edge_mode, au_train, M, rng=np.random.default_rng([config.seed, 131])
        )
        export_adjacency(
            adjacency,
            out_dir / "au-adjacency.txt",
            comments=[
                f"edge mode: {config.edge_mode}",
                f"seed: {config.seed}",
                f"config hash: {chash}",
                "row p, column q: weight of neighbor q for AU p",
            ],
        )

    main_params = (
        list(backbone.parameters())
        + list(conf_head.parameters())
        + list(clf_head.parameters())
        + list(va_head.parameters())
    )
    optimizer = torch.optim.Adam(
        [{"params": main_params, "lr": config.lr}, {"params": list(gcn.parameters()), "lr": config.au_lr}]
    )

    template = MemoryTemplate(C, M, tau=config.tau)
    gate = GateConfig(quantile=config.gate_quantile)
    batches_per_epoch = (n_train + config.batch_size - 1) // config.batch_size

    config_dict = config.model_dump(mode="json")
    tags = dict(tags or {})
    (out_dir / "config.json").write_text(
        json.dumps({"config": config_dict, "config_hash": chash, "tags": tags}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )

    history: list[dict] = []
    audit_lines: list[str] = []
    relabels_total = 0
    prev_template = None
    metrics_path = out_dir / "metrics.jsonl"
    checkpoint_path = out_dir / "checkpoint.pt"

    def _divergence_snapshot(epoch, batch_idx, parts):
        vals = {}
        for k, v in parts.items():
            f = float(v if isinstance(v, float) else v.detach().item())
            vals[k] = f if math.isfinite(f) else repr(f)
        snap = {
            "epoch": epoch,
            "batch": batch_idx,
            "losses": vals,
            "config_hash": chash,
        }
        (out_dir / "divergence.json").write_text(json.dumps(snap, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return snap

    metrics_file = metrics_path.open("w", encoding="utf-8")
    try:
        metrics_file.write(
            _json_line(
                {
                    "type": "run",
                    "config": config_dict,
                    "config_hash": chash,
                    "tags": tags,
                    "branches": config.branch_name(),
                    "n_train": n_train,
                    "n_test": len(test_recs),
                    "num_classes": C,
                    "au_count": M,
                    "edge_mode": config.edge_mode if config.use_au else None,
                }
            )
            + "\n"
        )

        for epoch in range(config.epochs):
            lam1, lam2 = losses.ramp_weights(epoch, config.ramp_epochs)
            main_lr = config.lr
            for at_epoch, value in config.lr_drops:
                if epoch >= at_epoch:
                    main_lr = value
            optimizer.param_groups[0]["lr"] = main_lr

            gamma = losses.class_weights(np.bincount(working, minlength=C)).as_tensor()
            gamma_ce = gamma if config.gamma_placement == "target" else None
            gamma_va = gamma if config.gamma_placement == "va" else torch.ones(C)

            if config.template_mode == "epoch_reset":
                template.reset_batch_counter()
            relabel_active = config.use_relabel and epoch >= config.relabel_start_epoch

            order = epoch_permutation(n_train, config.seed, epoch)
            sums = {"total": 0.0, "wce": 0.0, "w3c": 0.0, "wau": 0.0}
            correct = 0
            au_tp = np.zeros(M, dtype=np.int64)
            au_fp = np.zeros(M, dtype=np.int64)
            au_fn = np.zeros(M, dtype=np.int64)
            relabels_epoch = 0
            au_grad_share = None

            for b in range(batches_per_epoch):
                idx = order[b * config.batch_size : (b + 1) * config.batch_size]
                h_global = epoch * batches_per_epoch + b + 1
                x = tr.x[idx]
                y = torch.from_numpy(working[idx])

                features = backbone(x)
                if config.use_confidence:
                    alphas = conf_head(features)
                else:
                    alphas = torch.ones(len(idx))
                logits = clf_head(features)
                if not bool(torch.isfinite(logits).all()):
                    snap = _divergence_snapshot(epoch, h_global, {"logits_max_abs": logits.detach().abs().max()})
                    raise TrainingDivergence(f"non-finite logits at epoch {epoch} batch {h_global}")

                l_wau = torch.zeros(())
                if config.use_au:
                    s, p = semantic_forward(features, gcn, adjacency)
                    a_np = alphas.detach().numpy()
                    centers = batch_centers(s.detach().numpy(), a_np, working[idx], C)
                    template.update(centers)

                    if relabel_active:
                        ids = [tr.ids[j] for j in idx]
                        pos = {sid: k for k, sid in enumerate(ids)}
                        clf_preds = predict_classes(logits)
                        decisions = relabel(s.detach().numpy(), a_np, working[idx], ids, template, gate)
                        for d in decisions:
                            if d.applied:
                                working[row_of[d.sample_id]] = d.new_label
                                relabels_epoch += 1
                            audit_lines.append(
                                _json_line(
                                    {
                                        "type": "relabel",
                                        "epoch": epoch,
                                        "batch": h_global,
                                        "id": d.sample_id,
                                        "org": d.original,
                                        "new": d.new_label,
                                        "applied": d.applied,
                                        "reason": d.reason,
                                        "alpha": d.alpha,
                                        "zero_vector": d.zero_vector,
                                        "clf": int(clf_preds[pos[d.sample_id]]),
                                        "distances": d.distances,
                                    }
                                )
                            )
                        y = torch.from_numpy(working[idx])
                    l_wau = losses.weighted_au_bce(p, tr.au[idx], alphas.detach())

                l_wce = losses.confidence_weighted_ce(logits, y, alphas, class_gamma=gamma_ce)
                l_w3c = torch.zeros(())
                if config.use_va:
                    l_w3c = losses.weighted_ccc_loss(va_head(features), tr.va[idx], y, gamma_va)

                if config.use_au:
                    total = losses.total_loss(l_wce, l_w3c, l_wau, epoch, config.ramp_epochs)
                else:
                    # no AU branch, nothing to ramp against: plain sum, so the
                    # all-branches-off configuration is exactly ordinary CE training
                    total = l_wce + l_w3c

                parts = {"total": total, "wce": l_wce, "w3c": l_w3c, "wau": l_wau}
                if not bool(torch.isfinite(total)):
                    snap = _divergence_snapshot(epoch, h_global, parts)
                    raise TrainingDivergence(f"non-finite loss at epoch {epoch} batch {h_global}: {snap['losses']}")

                optimizer.zero_grad()
                total.backward()
                if b == 0 and config.use_au:
                    au_sq = sum(float(p.grad.pow(2).sum()) for p in gcn.parameters() if p.grad is not None)
                    all_sq = au_sq + sum(
                        float(p.grad.pow(2).sum()) for p in main_params if p.grad is not None
                    )
                    au_grad_share = math.sqrt(au_sq / all_sq) if all_sq > 0 else 0.0
                optimizer.step()

                for k, v in parts.items():
                    sums[k] += float(v.detach())
                correct += int((torch.from_numpy(predict_classes(logits)) == y).sum())
                if config.use_au:
                    pred_bits = (p.detach() > 0.5).numpy()
                    true_bits = tr.au[idx].numpy().astype(bool)
                    au_tp += (pred_bits & true_bits).sum(axis=0)
                    au_fp += (pred_bits & ~true_bits).sum(axis=0)
                    au_fn += (~pred_bits & true_bits).sum(axis=0)

            relabels_total += relabels_epoch
            test_metrics = _forward_eval(backbone, clf_head, va_head if config.use_va else None, te, C)
            au_f1_micro = None
            au_f1_per_au = None
            if config.use_au:
                denom = 2 * au_tp + au_fp + au_fn
                au_f1_per_au = [(2 * int(t) / int(d)) if d > 0 else None for t, d in zip(au_tp, denom)]
                micro_denom = int(denom.sum())
                au_f1_micro = (2 * int(au_tp.sum()) / micro_denom) if micro_denom > 0 else None
            drift = None
            if config.use_au and prev_template is not None:
                drift = float(np.linalg.norm(template.columns - prev_template, axis=1).sum())
            if config.use_au:
                prev_template = template.columns.copy()
            epoch_audit = None
            if relabel_active and flip_mask is not None:
                epoch_audit = audit_from_lines(audit_lines, flip_mask, strict_ids=False)
            record = {
                "type": "epoch",
                "epoch": epoch,
                "lr": main_lr,
                "lambda1": lam1 if config.use_au else None,
                "lambda2": lam2 if config.use_au else None,
                "loss_total": sums["total"] / batches_per_epoch,
                "loss_wce": sums["wce"] / batches_per_epoch,
                "loss_w3c": sums["w3c"] / batches_per_epoch,
                "loss_wau": sums["wau"] / batches_per_epoch,
                "train_accuracy": correct / n_train,
                "test_accuracy": _f(test_metrics.get("accuracy")),
                "ccc_valence": _f(test_metrics.get("ccc_valence")),
                "ccc_arousal": _f(test_metrics.get("ccc_arousal")),
                "confusion": test_metrics.get("confusion"),
                "au_f1": au_f1_micro,
                "au_f1_per_au": au_f1_per_au,
                "au_grad_share": au_grad_share,
                "template_drift": drift,
                "relabels_applied": relabels_epoch,
                "relabels_cumulative": relabels_total,
                "relabel_precision": epoch_audit["precision"] if epoch_audit else None,
                "relabel_recall": epoch_audit["recall"] if epoch_audit else None,
                "gamma": [float(g) for g in gamma],
            }
            history.append(record)
            metrics_file.write(_json_line(record) + "\n")
            metrics_file.flush()
            if log is not None:
                log(
                    f"epoch {epoch}: loss {record['loss_total']:.4f}"
                    f" test_acc {record['test_accuracy'] if record['test_accuracy'] is not None else float('nan'):.4f}"
                    f" relabels {relabels_epoch}"
                )

        audit_stats = None
        if config.use_relabel:
            header = _json_line({"type": "run", "config_hash": chash, "seed": config.seed})
            (out_dir / "relabel-audit.jsonl").write_text(
                "".join(line + "\n" for line in [header] + audit_lines), encoding="utf-8"
            )
            audit_stats = audit_from_lines(audit_lines, flip_mask, strict_ids=False)

        final = {
            "type": "final",
            "epochs": config.epochs,
            "config_hash": chash,
            "branches": config.branch_name(),
            "test_accuracy": history[-1]["test_accuracy"] if history else None,
            "ccc_valence": history[-1]["ccc_valence"] if history else None,
            "ccc_arousal": history[-1]["ccc_arousal"] if history else None,
            "au_f1": history[-1]["au_f1"] if history else None,
            "relabels_total": relabels_total,
            "relabel_precision": audit_stats["precision"] if audit_stats else None,
            "relabel_recall": audit_stats["recall"] if audit_stats else None,
            "corrected": audit_stats["n_corrected"] if audit_stats else None,
        }
        metrics_file.write(_json_line(final) + "\n")
    finally:
        metrics_file.close()

    save_checkpoint(
        checkpoint_path,
        {
            "config": config_dict,
            "config_hash": chash,
            "mode": manifest.mode,
            "input_dim": manifest.feature_dim,
            "num_classes": C,
            "au_count": M,
            "taxonomy": list(manifest.taxonomy.class_names),
            "state": {
                "backbone": backbone.state_dict(),
                "confidence": conf_head.state_dict(),
                "classifier": clf_head.state_dict(),
                "va": va_head.state_dict(),
                "gcn": gcn.state_dict(),
            },
            "adjacency": adjacency.normalized if adjacency is not None else None,
            "template": template.state() if config.use_au else None,
            "counters": {
                "epochs_completed": config.epochs,
                "global_batches": config.epochs * batches_per_epoch,
            },
            "final_epoch": config.epochs - 1,
        },
    )
    return TrainResult(
        out_dir=out_dir, config_hash=chash, history=history, final=final, checkpoint_path=checkpoint_path
    )


def _confusion(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> list[list[int]]:
    """Rows are true classes, columns predictions; row j sums to class j's count."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm.tolist()


def _forward_eval(backbone, clf_head, va_head, data: Optional[_SplitData], num_classes: int) -> dict:
    if data is None or len(data.ids) == 0:
        return {}
    with torch.no_grad():
        features = backbone(data.x)
        preds = predict_classes(clf_head(features))
        out = {
            "accuracy": float((preds == data.y).mean()),
            "confusion": _confusion(data.y, preds, num_classes),
        }
        if va_head is not None and data.va is not None:
            va_pred = va_head(features)
            out["ccc_valence"] = float(losses.ccc(data.va[:, 0], va_pred[:, 0]))
            out["ccc_arousal"] = float(losses.ccc(data.va[:, 1], va_pred[:, 1]))
    return out


def evaluate(checkpoint_path: str | Path, manifest: DatasetManifest, split: str = "test") -> dict:
    """Score a checkpoint on one split using only the backbone, classifier, and VA head.

    AU-branch state in the checkpoint (graph, GCN weights, templates) plays no
    part here; inference depends solely on the target and VA heads.
    """
    payload = load_checkpoint(checkpoint_path)
    cfg = payload["config"]
    if payload["num_classes"] != manifest.taxonomy.num_classes:
        raise ValueError(
            f"checkpoint has {payload['num_classes']} classes but manifest has {manifest.taxonomy.num_classes}"
        )
    if payload["mode"] != manifest.mode:
        raise ValueError(f"checkpoint mode {payload['mode']!r} does not match manifest mode {manifest.mode!r}")
    if payload["mode"] == "feature" and payload["input_dim"] != manifest.feature_dim:
        raise ValueError(
            f"checkpoint expects {payload['input_dim']}-dim features, manifest provides {manifest.feature_dim}"
        )

    backbone = build_backbone(payload["mode"], payload["input_dim"], cfg["feature_dim"], cfg["hidden_dim"])
    backbone.load_state_dict(payload["state"]["backbone"])
    clf_head = ClassifierHead(cfg["feature_dim"], payload["num_classes"])
    clf_head.load_state_dict(payload["state"]["classifier"])
    va_head = None
    if payload["state"].get("va") is not None:
        va_head = VAHead(cfg["feature_dim"])
        va_head.load_state_dict(payload["state"]["va"])

    records = manifest.split_records(split)
    if not records:
        raise ValueError(f"manifest has no {split!r} records")
    data = _prepare(records, manifest)
    with torch.no_grad():
        features = backbone(data.x)
        preds = predict_classes(clf_head(features))
        per_class = []
        for j in range(manifest.taxonomy.num_classes):
            mask = data.y == j
            per_class.append(float((preds[mask] == j).mean()) if mask.any() else None)
        out = {
            "split": split,
            "n": len(records),
            "accuracy": float((preds == data.y).mean()),
            "per_class_accuracy": per_class,
            "confusion": _confusion(data.y, preds, manifest.taxonomy.num_classes),
            "ccc_valence": None,
            "ccc_arousal": None,
        }
        if va_head is not None and data.va is not None:
            va_pred = va_head(features)
            out["ccc_valence"] = float(losses.ccc(data.va[:, 0], va_pred[:, 0]))
            out["ccc_arousal"] = float(losses.ccc(data.va[:, 1], va_pred[:, 1]))
    return out


def audit_from_lines(lines: list[str], mask: Optional[FlipMask], strict_ids: bool = True) -> dict:
    """Reduce relabel decisions to final per-sample outcomes and score them.

    ``strict_ids`` rejects a log/mask pair that shares no sample ids, which
    almost always means the files come from different runs. The trainer turns
    it off for its own per-epoch scoring: there the pairing is correct by
    construction, and on a small corpus the examined set can legitimately
    miss every flipped sample.

    A sample counts as corrected when its label after the run differs from its
    label before the run (intermediate back-and-forth cancels out). A correction
    is right when it lands on the pre-corruption label from the flip mask; for
    samples the mask never touched the pre-run label itself is the truth, so any
    applied change to them is wrong.
    """
    first_org: dict[str, int] = {}
    final_label: dict[str, int] = {}
    n_decisions = 0
    n_applied = 0
    for line in lines:
        rec = json.loads(line)
        if rec.get("type") != "relabel":
            continue
        n_decisions += 1
        sid = rec["id"]
        if sid not in first_org:
            first_org[sid] = rec["org"]
            final_label[sid] = rec["org"]
        if rec["applied"]:
            final_label[sid] = rec["new"]
            n_applied += 1

    corrected = {sid for sid in final_label if final_label[sid] != first_org[sid]}
    out = {
        "n_decisions": n_decisions,
        "n_applied": n_applied,
        "n_examined": len(first_org),
        "n_corrected": len(corrected),
        "n_flipped": len(mask) if mask is not None else None,
        "n_corrected_to_truth": None,
        "precision": None,
        "recall": None,
        "per_class": None,
    }
    if mask is None:
        return out
    if strict_ids and first_org and len(mask) and not (set(first_org) & set(mask.flips)):
        raise ValueError("audit log and flip mask share no sample ids; files are from different runs or corpora")
    to_truth = 0
    flipped_per_class: dict[int, int] = {}
    recovered_per_class: dict[int, int] = {}
    for sid, (original, _) in mask.flips.items():
        flipped_per_class[original] = flipped_per_class.get(original, 0) + 1
    for sid in corrected:
        truth = mask.flips[sid][0] if sid in mask else first_org[sid]
        if final_label[sid] == truth:
            to_truth += 1
            if sid in mask:
                recovered_per_class[truth] = recovered_per_class.get(truth, 0) + 1
    out["n_corrected_to_truth"] = to_truth
    out["precision"] = to_truth / len(corrected) if corrected else None
    out["recall"] = to_truth / len(mask) if len(mask) else None
    out["per_class"] = [
        {"class": j, "flipped": flipped_per_class[j], "recovered": recovered_per_class.get(j, 0)}
        for j in sorted(flipped_per_class)
    ]
    return out


def relabel_audit(audit_path: str | Path, mask: Optional[FlipMask] = None) -> dict:
    lines = Path(audit_path).read_text(encoding="utf-8").splitlines()
    return audit_from_lines([l for l in lines if l.strip()], mask)
