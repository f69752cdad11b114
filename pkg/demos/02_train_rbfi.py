"""Train an RBFI network on permutation-invariant MNIST and compare it with a ReLU baseline.

    python demos/02_train_rbfi.py --mnist /root/data/mnist --epochs 3 --train-limit 20000

Each epoch logs test accuracy next to the network's sensitivity bound.
"""

import argparse
import logging
import os

from rbfinet.layers import init_network, parse_geometry
from rbfinet.mnist import load_mnist
from rbfinet.training import TrainConfig, train

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--mnist", default=os.environ.get("RBFINET_MNIST", "/root/data/mnist"))
parser.add_argument("--epochs", type=int, default=3)
parser.add_argument("--train-limit", type=int, default=20000)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

train_data = load_mnist(args.mnist, "train").subset(args.train_limit)
test_data = load_mnist(args.mnist, "test")

for geometry in ("R(64,64,64,10|and,or,and,or)", "ReLU(64,64,64,10)"):
    print(f"\n{geometry}")
    net = init_network(parse_geometry(geometry, seed=args.seed), args.seed)
    log = train(net, train_data, TrainConfig(epochs=args.epochs, seed=args.seed), test_data)
    last = log.records[-1]
    print(f"final test accuracy {last.test_accuracy:.4f}, sensitivity bound {last.sensitivity_bound:.4g}")
