"""Student training on distilled or baseline data, and accuracy reports."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..distill.synthetic import SyntheticSet
from ..models.arch import make_arch
from ..models.network import get_network
from ..numkit.errors import ShapeError
from ..numkit.ops import one_hot_logits, softmax
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset, Tensor


@dataclass
class EvalConfig:
    archs: tuple = ("conv3-16",)
    trials: int = 5
    epochs: int = 300
    batch_size: int = 256
    lr_override: float | None = None  # None: use the distilled alpha
    eval_cadence: int = 50
    seed: int = 0

    def canonical(self) -> str:
        return (
            f"archs={','.join(self.archs)};trials={self.trials};epochs={self.epochs};"
            f"batch_size={self.batch_size};lr_override={self.lr_override!r};"
            f"eval_cadence={self.eval_cadence};seed={self.seed}"
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    tag: str  # datm | random-subset | full-data
    accuracies: dict = field(default_factory=dict)  # arch descriptor -> [acc per trial]
    flagged: dict = field(default_factory=dict)     # arch descriptor -> [diverged?]
    config_digest: str = ""

    def mean(self, arch: str) -> float:
        return float(np.mean(self.accuracies[arch]))

    def std(self, arch: str) -> float:
        return float(np.std(self.accuracies[arch]))

    def to_csv(self) -> str:
        lines = ["tag,arch,trial,acc"]
        for arch, accs in self.accuracies.items():
            for trial, acc in enumerate(accs):
                lines.append(f"{self.tag},{arch},{trial},{acc:.9g}")
        return "\n".join(lines) + "\n"


def _accuracy(net, params, images: np.ndarray, labels: np.ndarray, batch: int = 512) -> float:
    correct = 0
    for start in range(0, images.shape[0], batch):
        logits = net.forward(params, images[start : start + batch])
        correct += int((logits.argmax(axis=1) == labels[start : start + batch]).sum())
    return correct / images.shape[0]


def _train_student(
    arch, images: np.ndarray, targets: np.ndarray, lr: float, epochs: int,
    batch_size: int, rng: Rng, test_images: np.ndarray, test_labels: np.ndarray,
    eval_cadence: int,
):
    """Plain-SGD student; returns (final_or_best_accuracy, diverged_flag)."""
    net = get_network(arch)
    params = net.init_params(rng.split("init"))
    order_rng = rng.split("order")
    n = images.shape[0]
    full_batch = n <= batch_size
    best = 0.0
    for epoch in range(epochs):
        if full_batch:
            batches = [np.arange(n)]
        else:
            perm = order_rng.permutation(n)
            batches = [perm[s : s + batch_size] for s in range(0, n, batch_size)]
        for idx in batches:
            loss, grad = net.loss_and_grad(params, images[idx], targets[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad.values)):
                return best, True
            params.values -= lr * grad.values
        if eval_cadence and (epoch + 1) % eval_cadence == 0 and epoch + 1 < epochs:
            best = max(best, _accuracy(net, params, test_images, test_labels))
    return max(best, _accuracy(net, params, test_images, test_labels)), False


def evaluate(
    synset: SyntheticSet,
    test_split: LabeledDataset,
    config: EvalConfig,
    rng: Rng | None = None,
    tag: str = "datm",
) -> EvalReport:
    """Fresh students per (arch, trial) trained on the synthetic set.

    Students use the distilled alpha as their base learning rate unless the
    config overrides it. Diverged trials fall back to the best checkpoint
    accuracy seen at the eval cadence and are flagged.
    """
    if config.trials < 1:
        raise ShapeError("trials must be >= 1")
    if test_split.n == 0:
        raise ShapeError("empty test split")
    rng = rng or Rng(config.seed)
    images = synset.images.array
    targets = softmax(synset.logits).astype(images.dtype)
    lr = float(config.lr_override if config.lr_override is not None else synset.alpha)
    test_images = test_split.images.array
    test_labels = test_split.labels
    report = EvalReport(tag=tag, config_digest=config.digest())
    for arch_desc in config.archs:
        arch = make_arch(arch_desc, synset.images.shape[1:], synset.num_classes)
        accs, flags = [], []
        for trial in range(config.trials):
            trial_rng = rng.split(f"{arch_desc}-trial{trial}")
            acc, diverged = _train_student(
                arch, images, targets, lr, config.epochs, config.batch_size,
                trial_rng, test_images, test_labels, config.eval_cadence,
            )
            accs.append(acc)
            flags.append(diverged)
        report.accuracies[arch_desc] = accs
        report.flagged[arch_desc] = flags
    return report


def random_subset_baseline(
    dataset: LabeledDataset,
    ipc: int,
    test_split: LabeledDataset,
    config: EvalConfig,
    rng: Rng,
    student_lr: float = 0.02,
) -> EvalReport:
    """Uniform per-class subset with one-hot labels, evaluated like a synset."""
    chosen = []
    for c in range(dataset.num_classes):
        pool = dataset.class_indices(c)
        if pool.size < ipc:
            raise ShapeError(f"class {c} has {pool.size} < {ipc} samples")
        pick = rng.choice(pool.size, size=ipc, replace=False)
        chosen.append(pool[np.sort(pick)])
    indices = np.concatenate(chosen)
    labels = dataset.labels[indices]
    syn = SyntheticSet(
        arch=make_arch(config.archs[0], dataset.image_shape, dataset.num_classes),
        images=Tensor.from_array(dataset.images.array[indices]),
        logits=Tensor.from_array(one_hot_logits(labels, dataset.num_classes)),
        alpha=student_lr,
        target_classes=labels,
        label_mode="one-hot",
        provenance={"seed": rng.seed, "source_indices": indices.tolist()},
    )
    return evaluate(syn, test_split, config, rng=rng.split("eval"), tag="random-subset")
