"""
Temperature-driven sampling on a three-mode toy model
======================================================

A binary RBM with three well separated modes traps a plain Gibbs chain in
whichever mode it starts in. Giving every particle its own fluctuating
inverse temperature lets the population cross the barriers.
"""
import numpy as np

from beam.rbm import RbmModel
from beam.tds import ParticlePopulation, TdsConfig, advance, gamma_step, stationary_betas

# Six visible units in three blocks of two, one hidden unit per block. A
# hidden unit strongly excites its own block and inhibits the others.
W = np.full((6, 3), -20.0)
for j in range(3):
    W[2 * j:2 * j + 2, j] = 20.0
model = RbmModel(np.full(6, -5.0), np.zeros(6), np.full(3, -27.0), W)

def mode_of(v):
    # which block is switched on; -1 for anything else
    blocks = v.reshape(len(v), 3, 2).all(axis=2)
    return np.where(blocks.sum(axis=1) == 1, blocks.argmax(axis=1), -1)

rng = np.random.default_rng(0)
start = np.tile([1.0, 1.0, 0, 0, 0, 0], (200, 1))

for var_beta in (0.0, 0.81):
    cfg = TdsConfig(m=200, phi=0.9, var_beta=var_beta)
    pop = ParticlePopulation(start.copy(), np.zeros((200, 3)), stationary_betas(var_beta, 200, rng))
    seen = set()
    for _ in range(100):
        pop = advance(model, pop, 10, cfg, rng)
        seen |= set(mode_of(pop.v).tolist())
    print(f"Var[beta] = {var_beta}: modes visited {sorted(m for m in seen if m >= 0)}")

# The inverse temperatures follow an autoregressive Gamma process with
# stationary mean 1; its variance and memory are the two knobs.
beta = stationary_betas(0.81, 5000, rng)
trace = []
for _ in range(400):
    beta = gamma_step(beta, 0.9, 0.81, rng)
    trace.append(beta)
trace = np.array(trace)
c = trace - trace.mean()
print("beta mean %.3f  variance %.3f  lag-1 autocorrelation %.3f"
      % (trace.mean(), trace.var(), np.sum(c[1:] * c[:-1]) / np.sum(c * c)))
