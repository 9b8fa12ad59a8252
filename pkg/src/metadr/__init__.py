"""Office demand-response simulation with PPO and MAML-style meta-learning.

Subpackages:
    net          fixed-topology actor-critic MLP, manual backprop, optimizers
    env          day-step office simulator with four occupant response models
    ppo          clipped-surrogate policy optimization
    maml         meta-training loop and checkpoints
    experiments  adaptation-evaluation protocol and reports
    cli          command-line entry points
    kernels      compiled/numpy kernel backend selection
"""

__version__ = "0.1.0"
