"""boxlift 的异常体系

服务层只抛出这里定义的异常；命令层把它们映射为稳定的退出码
(0 成功, 1 运行失败, 2 用法/配置错误)。
"""

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class BoxliftError(Exception):
    """所有领域异常的基类"""

    exit_code = EXIT_FAILURE


class InvalidParameter(BoxliftError, ValueError):
    """违反前置条件或类型不变量"""


class ConfigError(BoxliftError):
    """配置文件或命令行参数无效"""

    exit_code = EXIT_USAGE


# 几何

class GeometryError(BoxliftError):
    pass


class NonPositiveDepth(GeometryError):
    """点位于相机平面上或相机后方"""

    def __init__(self, depth):
        super().__init__(f"深度必须为正，实际为 {depth:.6g}")
        self.depth = depth


class NonUprightBox(GeometryError):
    """3D IoU 只支持俯仰角和横滚角为零的框"""


# 平移求解

class SolverError(BoxliftError):
    pass


class Infeasible(SolverError):
    """某个对应配置无可行解"""


class RankDeficient(Infeasible):
    """线性方程组秩亏"""


class NoFeasibleConfiguration(SolverError):
    """所有对应配置都不可行"""


# MultiBin

class MultiBinError(BoxliftError):
    pass


class ZeroVector(MultiBinError):
    """(cos, sin) 原始输出的模长过小，无法归一化"""


class DivergedLoss(BoxliftError):
    """训练损失变为非有限值"""


# KITTI 文件格式

class KittiFormatError(BoxliftError):
    pass


class MalformedLine(KittiFormatError):
    def __init__(self, line_no, token, reason=""):
        message = f"第 {line_no} 行格式错误: {token!r}"
        if reason:
            message += f" ({reason})"
        super().__init__(message)
        self.line_no = line_no
        self.token = token


class MissingKey(KittiFormatError):
    def __init__(self, key):
        super().__init__(f"标定文件缺少 {key}")
        self.key = key


class MissingDimensions(KittiFormatError):
    """记录没有尺寸信息"""


class NoSamples(KittiFormatError):
    def __init__(self, category):
        super().__init__(f"类别 {category} 没有样本")
        self.category = category
