"""
异常定义
"""


class CMAEError(Exception):
    """所有领域错误的基类"""


class ConfigurationError(CMAEError, ValueError):
    """配置错误：未知任务、非法参数、M = 0 等"""


class ContractViolation(CMAEError, ValueError):
    """调用方违反前置条件：非法索引集合、越界动作、畸形收益矩阵"""


class UndefinedDistributionError(CMAEError, RuntimeError):
    """计数器为空时无法定义概率分布"""


class RejectedInputError(CMAEError, ValueError):
    """离散化器拒绝非有限输入"""


class InsufficientDataError(CMAEError, RuntimeError):
    """评估记录不足，无法计算最终指标"""
