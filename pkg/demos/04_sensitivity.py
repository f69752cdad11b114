"""Sensitivity bounds: how they are computed, how they compare with observed
output changes, and how the regularizer c * bound shrinks them.

    python demos/04_sensitivity.py
"""

import os

import numpy as np

from rbfinet.layers import init_network, parse_geometry
from rbfinet.mnist import load_mnist
from rbfinet.sensitivity import network_sensitivity_bound, rbfi_weight_factor, unit_sensitivity
from rbfinet.training import TrainConfig, train

print("unit bounds")
print("  relu    w=[1,-2,3]:", unit_sensitivity("relu", [1, -2, 3]))
print("  sigmoid w=[4]:     ", unit_sensitivity("sigmoid", [4]))
print("  rbfi    u=[1,2]:   ", round(unit_sensitivity("rbfi", [1, 2]), 6))
print("  rbf2    u=[3,4]:   ", round(unit_sensitivity("rbf2", [3, 4]), 6))
print("\nper-input RBFI factor phi(u) = max(2/e u^2, sqrt(2/e) u):")
for u in (0.1, 0.5, 1.0, 1.166, 2.0, 3.0):
    print(f"  u={u:<5}  phi={float(rbfi_weight_factor(u)):.4f}  (2/e)u^2={2 / np.e * u * u:.4f}")

rng = np.random.default_rng(0)
print("\nbound versus the largest change seen over 10^4 random perturbations, eps = 0.1")
for code in ("R(8,8,4|and,or,or)", "ReLU(8,8,4)", "Sigmoid(8,8,4)"):
    net = init_network(parse_geometry(code, input_size=10, n_classes=4), 1)
    s = network_sensitivity_bound(net).network_bound
    x = rng.uniform(0, 1, (10_000, 10))
    dx = 0.1 * rng.choice([-1.0, 1.0], size=x.shape)
    seen = np.abs(net.predict(x + dx) - net.predict(x)).max()
    print(f"  {code:20s} bound*eps {s * 0.1:9.4f}   observed {seen:.4f}")

mnist = os.environ.get("RBFINET_MNIST", "/root/data/mnist")
if os.path.isdir(mnist):
    print("\nregularization with u_max = 10 (two epochs on 10,000 images)")
    train_data = load_mnist(mnist, "train").subset(10_000)
    test_data = load_mnist(mnist, "test").subset(2_000)
    for c in (0.0, 1e-4):
        net = init_network(parse_geometry("R(64,64,10|and,or,or)", u_max=10.0), 0)
        log = train(net, train_data, TrainConfig(epochs=2, regularizer_c=c), test_data)
        print(f"  c={c:g}: bound {log.records[-1].sensitivity_bound:9.2f}  accuracy {log.final_accuracy:.4f}")
