"""
随机数流管理

所有随机性都来自 numpy 的 PCG64 生成器。主种子包装为 SeedSequence，
子流通过 SeedSequence.spawn() 派生，因此同一主种子在任何平台上都给出
相同的子流序列。
"""
from typing import List, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """将整数种子或SeedSequence统一为SeedSequence"""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    创建PCG64随机数生成器

    参数:
        seed: 整数种子或SeedSequence

    返回:
        numpy Generator
    """
    return np.random.Generator(np.random.PCG64(as_seed_sequence(seed)))


def spawn_seeds(seed: SeedLike, count: int) -> List[np.random.SeedSequence]:
    """
    从主种子派生 count 个独立子流

    参数:
        seed: 主种子
        count: 子流数量

    返回:
        SeedSequence列表，按子流编号排序
    """
    return as_seed_sequence(seed).spawn(count)
