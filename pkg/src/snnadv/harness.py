"""Experiment orchestration: balanced evaluation-set selection, pairwise
transferability matrices, the surrogate-kernel robustness sweep, and the
four-column multi-model attack comparison.

Every evaluation set contains only samples that all models under test
classify correctly, with class counts differing by at most one; that
precondition is re-verified before each attack run. All runs are
deterministic under a fixed seed, which is recorded alongside the outputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import attacks
from .attacks import AttackConfig
from .errors import SelectionError
from .surrogate import SurrogateSpec


@dataclass
class EvalSet:
    indices: np.ndarray        # positions in the source dataset
    x: np.ndarray
    y: np.ndarray
    class_counts: np.ndarray
    # per-model clean correctness over the selected samples; all True by
    # construction and re-checked before every attack run
    clean_correct: Optional[np.ndarray] = None

    def verify(self, models: Sequence) -> None:
        """Re-check the all-correct precondition before an attack run."""
        for i, model in enumerate(models):
            pred = model.predict(self.x)
            if not np.all(pred == self.y):
                raise SelectionError(f"evaluation set no longer all-correct for model {i}")


def select_eval_set(models: Sequence, x: np.ndarray, y: np.ndarray, n: int, *,
                    seed: int = 0, n_classes: Optional[int] = None) -> EvalSet:
    """Randomly pick n class-balanced samples that every model classifies
    correctly. Fails loudly, naming the starved classes, when the data cannot
    supply the per-class quota."""
    y = np.asarray(y)
    c = n_classes if n_classes is not None else int(max(m.n_classes for m in models))
    per_model = np.stack([model.predict(x) == y for model in models])
    correct = np.all(per_model, axis=0)
    base, extra = divmod(n, c)
    quotas = [base + (1 if cls < extra else 0) for cls in range(c)]
    rng = np.random.default_rng(seed)
    chosen = []
    starved = []
    for cls, quota in enumerate(quotas):
        pool = np.flatnonzero(correct & (y == cls))
        if pool.size < quota:
            starved.append((cls, int(pool.size), quota))
            continue
        chosen.append(rng.choice(pool, size=quota, replace=False))
    if starved:
        detail = "; ".join(f"class {cls}: have {have}, need {need}"
                           for cls, have, need in starved)
        raise SelectionError(f"not enough correctly classified samples ({detail})")
    indices = np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=int)
    counts = np.bincount(y[indices], minlength=c)
    return EvalSet(indices=indices, x=x[indices], y=y[indices], class_counts=counts,
                   clean_correct=per_model[:, indices])


def transferability(gen_model, eval_model, attack_fn: Callable, evalset: EvalSet) -> float:
    """Fraction of adversarial examples crafted on gen_model that eval_model
    misclassifies. The evaluation set guarantees clean correctness."""
    evalset.verify([gen_model, eval_model])
    x_adv = attack_fn(gen_model, evalset.x, evalset.y)
    return float(np.mean(eval_model.predict(x_adv) != evalset.y))


@dataclass
class TransferMatrix:
    names: list
    n: int
    per_attack: dict           # attack name -> [M, M] array
    max_matrix: np.ndarray

    def write_csv(self, out_dir: Path) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for attack_name, matrix in {**self.per_attack, "max": self.max_matrix}.items():
            path = out_dir / f"transfer_{attack_name}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["generator"] + self.names)
                for name, row in zip(self.names, matrix):
                    writer.writerow([name] + [f"{v:.6f}" for v in row])
            paths.append(path)
        return paths

    def as_dict(self) -> dict:
        return {"models": self.names, "n": self.n,
                "per_attack": {k: v.tolist() for k, v in self.per_attack.items()},
                "max": self.max_matrix.tolist()}


def _attack_runner(attack_name: str, cfg: AttackConfig) -> Callable:
    def run(model, x, y):
        return attacks.run_attack(attack_name, [model], x, y, cfg)
    return run


def transfer_matrix(models: Sequence, names: Sequence[str], x: np.ndarray, y: np.ndarray,
                    n: int, cfg: AttackConfig,
                    attack_names: Sequence[str] = ("fgsm", "pgd", "mim"),
                    seed: int = 0, jobs: int = 1) -> TransferMatrix:
    """All-pairs transferability, one evaluation set per model pair, plus the
    elementwise max across attacks."""
    m = len(models)
    names = list(names)
    evalsets = {}
    for i in range(m):
        for j in range(m):
            key = frozenset((i, j))
            if key not in evalsets:
                pair = [models[i]] if i == j else [models[i], models[j]]
                evalsets[key] = select_eval_set(pair, x, y, n, seed=seed)

    def cell(i, j, attack_name):
        return transferability(models[i], models[j], _attack_runner(attack_name, cfg),
                               evalsets[frozenset((i, j))])

    per_attack = {}
    tasks = [(a, i, j) for a in attack_names for i in range(m) for j in range(m)]
    results = {}
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(cell, i, j, a): (a, i, j) for a, i, j in tasks}
            for fut, key in futures.items():
                results[key] = fut.result()
    else:
        for key in tasks:
            results[key] = cell(key[1], key[2], key[0])
    for attack_name in attack_names:
        matrix = np.zeros((m, m))
        for i in range(m):
            for j in range(m):
                matrix[i, j] = results[(attack_name, i, j)]
        per_attack[attack_name] = matrix
    max_matrix = np.max(np.stack(list(per_attack.values())), axis=0)
    return TransferMatrix(names=names, n=n, per_attack=per_attack, max_matrix=max_matrix)


@dataclass
class SweepGrid:
    kinds: list
    eps_values: list
    robust_accuracy: np.ndarray   # [kinds, eps]
    success_rate: np.ndarray

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["surrogate"] + [f"eps={e:g}" for e in self.eps_values]
                            + [f"success_eps={e:g}" for e in self.eps_values])
            for kind, acc_row, suc_row in zip(self.kinds, self.robust_accuracy,
                                              self.success_rate):
                writer.writerow([kind] + [f"{v:.6f}" for v in acc_row]
                                + [f"{v:.6f}" for v in suc_row])
        return path

    def as_dict(self) -> dict:
        return {"surrogates": self.kinds, "eps": list(self.eps_values),
                "robust_accuracy": self.robust_accuracy.tolist(),
                "success_rate": self.success_rate.tolist()}


def surrogate_sweep(snn, eps_values: Sequence[float], specs: Sequence[SurrogateSpec],
                    evalset: EvalSet, cfg: AttackConfig) -> SweepGrid:
    """PGD robust accuracy over a (kernel, eps) grid.

    The forward pass is untouched; only the backward kernel is swapped. Each
    eps restarts the attack from the clean inputs. Both robust accuracy and
    its complement are reported, since tables in this area mix the two.
    """
    evalset.verify([snn])
    original = snn.surrogate
    acc = np.zeros((len(specs), len(eps_values)))
    try:
        for si, spec in enumerate(specs):
            snn.surrogate = spec
            for ei, eps in enumerate(eps_values):
                if eps == 0.0:
                    x_adv = evalset.x
                else:
                    step = min(cfg.eps_step, eps / 4.0)
                    cfg_eps = replace(cfg, eps_max=float(eps), eps_step=step)
                    x_adv = attacks.pgd(snn, evalset.x, evalset.y, cfg_eps)
                acc[si, ei] = float(np.mean(snn.predict(x_adv) == evalset.y))
    finally:
        snn.surrogate = original
    return SweepGrid(kinds=[s.kind for s in specs], eps_values=list(eps_values),
                     robust_accuracy=acc, success_rate=1.0 - acc)


def joint_success(models: Sequence, x_adv: np.ndarray, labels: np.ndarray) -> float:
    """Fraction misclassified by every model simultaneously."""
    flags = np.ones(len(labels), dtype=bool)
    for model in models:
        flags &= model.predict(x_adv) != labels
    return float(flags.mean())


def multi_model_comparison(pairs: Sequence[tuple], x: np.ndarray, y: np.ndarray, n: int,
                           single_cfg: AttackConfig, saga_cfg: AttackConfig,
                           seed: int = 0, pair_names: Optional[Sequence] = None) -> list:
    """Joint-success table per model pair: best single MIM, best single PGD,
    the balanced fixed blend [0.5, 0.5], and the self-tuning blend."""
    rows = []
    for pi, pair in enumerate(pairs):
        models = list(pair)
        evalset = select_eval_set(models, x, y, n, seed=seed)
        mims = []
        pgds = []
        for model in models:
            evalset.verify(models)
            mims.append(joint_success(models, attacks.mim(model, evalset.x, evalset.y,
                                                          single_cfg), evalset.y))
            pgds.append(joint_success(models, attacks.pgd(model, evalset.x, evalset.y,
                                                          single_cfg), evalset.y))
        evalset.verify(models)
        basic = joint_success(models, attacks.saga(models, [0.5, 0.5], evalset.x,
                                                   evalset.y, saga_cfg), evalset.y)
        evalset.verify(models)
        adv, _ = attacks.auto_saga(models, evalset.x, evalset.y, saga_cfg)
        auto = joint_success(models, adv, evalset.y)
        name = pair_names[pi] if pair_names else f"pair{pi}"
        rows.append({"pair": name, "max_mim": max(mims), "max_pgd": max(pgds),
                     "basic_saga": basic, "auto_saga": auto, "n": n})
    return rows


def write_comparison_csv(rows: list, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "max_mim", "max_pgd", "basic_saga", "auto_saga", "n"])
        for row in rows:
            writer.writerow([row["pair"], f"{row['max_mim']:.6f}", f"{row['max_pgd']:.6f}",
                             f"{row['basic_saga']:.6f}", f"{row['auto_saga']:.6f}", row["n"]])
    return path


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
