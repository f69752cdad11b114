"""Attack a ReLU network and an RBFI network with FGSM, I-FGSM, PGD and uniform noise.

    python demos/03_attacks.py --epochs 2 --train-limit 20000 --pgd-limit 200

The ReLU network collapses at eps = 0.3 while the RBFI network mostly keeps
its accuracy. PGD is slow, so it runs on the first ``--pgd-limit`` test images.
"""

import argparse
import os

from rbfinet.attacks import AttackConfig, evaluate_under_attack
from rbfinet.layers import init_network, parse_geometry
from rbfinet.mnist import load_mnist
from rbfinet.training import TrainConfig, train

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--mnist", default=os.environ.get("RBFINET_MNIST", "/root/data/mnist"))
parser.add_argument("--epochs", type=int, default=2)
parser.add_argument("--train-limit", type=int, default=20000)
parser.add_argument("--pgd-limit", type=int, default=200)
args = parser.parse_args()

train_data = load_mnist(args.mnist, "train").subset(args.train_limit)
test_data = load_mnist(args.mnist, "test")

for geometry in ("ReLU(64,64,64,10)", "R(64,64,64,10|and,or,and,or)"):
    net = init_network(parse_geometry(geometry), 0)
    train(net, train_data, TrainConfig(epochs=args.epochs))
    print(f"\n{geometry}")
    for kind in ("fgsm", "ifgsm", "noise", "pgd"):
        for eps in (0.1, 0.3):
            limit = args.pgd_limit if kind == "pgd" else None
            res = evaluate_under_attack(net, test_data, AttackConfig(kind, eps), limit=limit)
            print(f"  {kind:6s} eps={eps:.1f}  clean {res.clean_accuracy:.4f}  attacked {res.attacked_accuracy:.4f}"
                  f"  ({res.n_examples} images)")
