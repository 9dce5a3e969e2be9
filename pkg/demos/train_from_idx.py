"""Train and evaluate a DAQC classifier through the library API.

Loads IDX files from a directory (``train-*`` and ``t10k-*`` with the
standard MNIST names), keeps a class subset, trains with early stopping on a
stratified validation split and prints the test metrics together with the
per-epoch trace::

    python demos/train_from_idx.py DATA_DIR --subset mnist-2 --limit 400 --epochs 20
"""
import argparse

from daqc.builder import DaqcConfig, build_circuit, encode_images
from daqc.datasets import (SubsetRule, load_idx, seeded_subsample, standard_paths,
                           stratified_split, subset)
from daqc.training import TrainConfig, evaluate, train


def load(root, split, rule, limit, seed):
    ds = subset(load_idx(*standard_paths(root, split)), rule)
    return seeded_subsample(ds, limit, seed) if limit else ds


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root")
    parser.add_argument("--subset", default="mnist-2")
    parser.add_argument("--limit", type=int, default=None, help="training samples to keep")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rule = SubsetRule.named(args.subset)
    full = load(args.root, "train", rule, args.limit, args.seed)
    fit, val = stratified_split(full, 0.2, args.seed)
    test = load(args.root, "test", rule, None, args.seed)

    circuit = DaqcConfig()
    spec = build_circuit(circuit)
    print(f"{spec.n_qubits} qubits, {circuit.n_trainables(full.n_classes)} trainables, "
          f"{len(fit)}/{len(val)}/{len(test)} train/val/test samples")

    def arrays(ds):
        return encode_images(ds.images, circuit), ds.labels

    config = TrainConfig(epochs=args.epochs, early_stop_patience=args.epochs, init_seed=args.seed)
    params, trace = train(spec, arrays(fit), arrays(val), config, n_classes=full.n_classes)
    for row in trace:
        print(f"epoch {row['epoch']:3d}  train loss {row['train_loss']:.4f}  "
              f"val loss {row['val_loss']:.4f}  val AUC {row['val_auc']:.4f}  "
              f"grad L2 {row['grad_l2']:.3g}")
    print("test:", evaluate(spec, params, arrays(test)).to_json())


if __name__ == "__main__":
    main()
