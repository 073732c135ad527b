"""
异常层次：所有库代码抛出的异常都继承自 InlaSmcError，
main.py 根据异常类别映射到退出码（1 用法错误，2 数值失败）
"""


class InlaSmcError(Exception):
    """本项目所有异常的基类"""


class ConfigError(InlaSmcError, ValueError):
    """配置文件或命令行参数无效"""


class NumericalError(InlaSmcError, ArithmeticError):
    """数值计算失败的基类"""


class NotPositiveDefinite(NumericalError):
    """Cholesky分解遇到非正主元"""


class NoConvergence(NumericalError):
    """迭代算法在上限内未收敛"""


class OptimFailed(NumericalError):
    """超参数优化失败"""


class HessianNotPD(NumericalError):
    """众数处的Hessian矩阵非正定"""


class NonPositiveConditionalVariance(NumericalError):
    """提议链的条件方差非正"""


class AllWeightsZero(NumericalError):
    """所有粒子权重均为零（对数权重全为 -inf）"""


class DimensionMismatch(InlaSmcError, ValueError):
    """向量/矩阵维度不一致"""


class DimensionTooLarge(InlaSmcError, ValueError):
    """维度超过稠密计算允许的上限"""


class NegativeCount(InlaSmcError, ValueError):
    """Poisson观测出现负计数"""


class IndexOutOfRange(InlaSmcError, IndexError):
    """时间索引越界"""


class UnnormalizedWeights(InlaSmcError, ValueError):
    """权重未归一化"""


class InvalidInit(InlaSmcError, ValueError):
    """PMMH初始值无效"""


class EmptyChain(InlaSmcError, ValueError):
    """马尔可夫链没有样本"""


class InvalidHyperParams(InlaSmcError, ValueError):
    """超参数违反约束（|rho| < 1, sigma > 0）"""
