import math
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.geometry import Box2D


# 标注/结果记录
class DetectionRecord(BaseModel):
    """KITTI 标注或结果文件中的一行"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    category: str = Field(..., description="类别名，未知类别原样保留")
    truncated: float = Field(0.0, description="截断比例 0..1，结果文件中为 -1")
    occluded: int = Field(0, description="遮挡等级 0..3，结果文件中为 -1")
    alpha: float = Field(..., description="局部朝向 θ_l (弧度)")
    box2d: Box2D = Field(..., description="2D框 (像素)")
    dims: Optional[Tuple[float, float, float]] = Field(None, description="尺寸 (h, w, l) 米")
    location: Tuple[float, float, float] = Field(..., description="框底面中心 (x, y, z) 米")
    rotation_y: float = Field(..., description="全局偏航 θ (弧度)")
    score: Optional[float] = Field(None, description="检测得分，标注文件中为空")

    @property
    def is_dont_care(self):
        return self.category == "DontCare"

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, value):
        # DontCare 行的尺寸为 -1，按缺失处理
        if value is not None and not all(v > 0 for v in value):
            return None
        return value

    @model_validator(mode="after")
    def _angle_range(self):
        # DontCare 行的角度为 -10
        if not self.is_dont_care:
            for name in ("alpha", "rotation_y"):
                if abs(getattr(self, name)) > math.pi + 1e-9:
                    raise ValueError(f"{name} 超出 [-π, π]: {getattr(self, name)}")
        return self


class LiftResultRow(BaseModel):
    """lift 命令输出的 JSON-lines 行"""

    frame: str = Field(..., description="帧编号 (文件名去掉扩展名)")
    index: int = Field(..., description="记录在标注文件中的行号 (从0开始)")
    category: str
    truncated: float = -1.0
    occluded: int = -1
    alpha: float
    box2d: Tuple[float, float, float, float] = Field(..., description="x_min, y_min, x_max, y_max")
    dims: Tuple[float, float, float] = Field(..., description="尺寸 (h, w, l) 米")
    location: Tuple[float, float, float] = Field(..., description="框底面中心 (x, y, z) 米")
    rotation_y: float
    score: float = 1.0
    configuration: Tuple[int, int, int, int] = Field(..., description="左/右/上/下对应的角点")
    configuration_index: int = Field(..., description="枚举序号")
    residual: float = Field(..., ge=0)
    reprojection_error: float = Field(..., ge=0)


class ResidualRow(BaseModel):
    """lift --residuals 文件的一行: 网络预测的尺寸残差 δ"""

    frame: str
    index: int
    delta: Tuple[float, float, float] = Field(..., description="(dx, dy, dz) 顺序的残差 (米)")


# 运行配置
class ConstraintModeName(str, Enum):
    general = "general"
    upright = "upright"
    zeroroll = "zeroroll"
    kitti = "kitti"


class MultiBinSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bins: int = Field(2, ge=1, description="bin 数量")
    overlap: float = Field(0.1, ge=0.0, lt=1.0, description="半覆盖宽度 = (1+overlap)·π/bins")
    w: float = Field(1.0, gt=0, description="L_θ = L_conf + w·L_loc 中的 w")
    alpha: float = Field(1.0, gt=0, description="L = α·L_dims + L_θ 中的 α")


class ToySettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sweep: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    samples: int = Field(5000, ge=1)
    test_samples: int = Field(2000, ge=1)
    sigma: float = Field(0.05, ge=0)
    hidden: int = Field(32, ge=1)
    epochs: int = Field(200, ge=0)
    lr: float = Field(0.05, ge=0)
    batch_size: int = Field(64, ge=1)

    @field_validator("sweep")
    @classmethod
    def _positive_bins(cls, value):
        if not value or any(n < 1 for n in value):
            raise ValueError("sweep 中的 bin 数必须 ≥ 1 且非空")
        return value


class NoiseSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sigma_px: float = Field(1.0, ge=0)
    boxes: int = Field(2000, ge=1)
    bin_width: float = Field(10.0, gt=0)
    max_distance: float = Field(50.0, gt=0)


class RunConfig(BaseModel):
    """一次批处理运行的全部参数"""

    model_config = ConfigDict(extra="forbid")

    mode: ConstraintModeName = ConstraintModeName.kitti
    seed: int = 0
    iou_thresh: float = Field(0.7, gt=0, le=1)
    category: str = "Car"
    multibin: MultiBinSettings = Field(default_factory=MultiBinSettings)
    toy: ToySettings = Field(default_factory=ToySettings)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)

    @model_validator(mode="after")
    def _noise_bins(self):
        if self.noise.max_distance < self.noise.bin_width:
            raise ValueError("noise.max_distance 必须不小于 noise.bin_width")
        return self


# 评测输出
class DifficultyMetrics(BaseModel):
    difficulty: str
    num_gt: int
    num_det: int
    ap: float
    aos: float
    os: Optional[float] = Field(None, description="AOS/AP，AP 为 0 时为空")
    angle_error_deg: Optional[float] = None


class ViewpointSummary(BaseModel):
    count: int
    med_err_deg: float
    acc_pi_6: float


class EvalSummary(BaseModel):
    category: str
    iou_thresh: float
    frames: int
    missing_gt: List[str] = Field(default_factory=list)
    difficulties: List[DifficultyMetrics]
    matched_pairs: int
    mean_center_error: Optional[float] = None
    mean_closest_point_error: Optional[float] = None
    mean_closest_surface_error: Optional[float] = None
    mean_iou3d: Optional[float] = None
    viewpoint: Optional[ViewpointSummary] = None
