#!/usr/bin/env python3
"""Minimal walkthrough of the lifelong learner on the XOR/XNOR pair.

Shows the error on the first task dropping when the second task arrives,
which a task-blind forest cannot do.
"""

from omniforest import (
    ForestConfig,
    HonestForestClassifier,
    OmniLearner,
    SeedStream,
    XorSpec,
    generate_xor,
    pool_datasets,
)

seed = SeedStream(1)
xor_train = generate_xor(XorSpec(750, seed=seed.child("xor"), task_id=0))
xnor_train = generate_xor(XorSpec(750, label_flip=True, seed=seed.child("xnor"), task_id=1))
xor_test = generate_xor(XorSpec(20_000, seed=seed.child("test"), task_id=0))

learner = OmniLearner(ForestConfig(), seed=seed.child("fit"))
learner.add_task(xor_train)
print(f"error on XOR after XOR only:        {learner.error(xor_test):.4f}")

learner.add_task(xnor_train)
print(f"error on XOR after XNOR arrives:    {learner.error(xor_test):.4f}  (backward transfer)")

baseline = HonestForestClassifier(seed=seed.child("rf"))
baseline.fit(pool_datasets([xor_train, xnor_train]))
print(f"task-blind forest on pooled data:   {baseline.error(xor_test):.4f}  (forgetting)")
