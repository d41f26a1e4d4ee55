"""
🏛️ UWB Swarm Tracker - Esquema de cenário
Modelos pydantic do arquivo JSON de cenário (versão de esquema 1)
"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SCHEMA_VERSION = 1

Point2 = Tuple[float, float]
Point3 = Tuple[float, float, float]


class ScenarioError(ValueError):
    """Cenário inválido; `issues` lista pares (caminho do campo, motivo)"""

    def __init__(self, issues: List[Tuple[str, str]]):
        self.issues = issues
        super().__init__("; ".join(f"{path}: {reason}" for path, reason in issues))

    @classmethod
    def from_validation_error(cls, exc: ValidationError) -> "ScenarioError":
        issues = []
        for error in exc.errors():
            path = ".".join(str(part) for part in error['loc']) or "<root>"
            issues.append((path, error['msg']))
        return cls(issues)

    def to_dict(self) -> List[dict]:
        return [{'field': path, 'reason': reason} for path, reason in self.issues]


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)


class AnchorSpec(_Strict):
    id: int = Field(ge=0)
    position: Point3


class ZoneSpec(_Strict):
    """Polígono do piso com máscara de visibilidade de âncoras"""
    name: str
    polygon: List[Point2] = Field(min_length=3)
    visible_anchors: List[int] = Field(default_factory=list)


class TagSpec(_Strict):
    id: int = Field(ge=0)
    waypoints: List[Point3] = Field(min_length=1)
    speed: float = Field(default=1.0, gt=0)
    start_us: int = Field(default=0, ge=0)
    stop_us: Optional[int] = None
    loop: bool = False

    @model_validator(mode='after')
    def _check_lifetime(self):
        if self.stop_us is not None and self.stop_us <= self.start_us:
            raise ValueError("stop_us deve ser maior que start_us")
        return self


class FloorPlan(_Strict):
    min: Point2
    max: Point2

    @model_validator(mode='after')
    def _check_box(self):
        if self.max[0] <= self.min[0] or self.max[1] <= self.min[1]:
            raise ValueError("max deve ser maior que min em x e y")
        return self

    def contains(self, point) -> bool:
        return self.min[0] <= point[0] <= self.max[0] and self.min[1] <= point[1] <= self.max[1]


class MediumSpec(_Strict):
    comm_range: float = Field(default=20.0, gt=0)
    delay_mean_us: float = Field(default=100.0, ge=0)
    delay_jitter_us: float = Field(default=50.0, ge=0)
    airtime_us: int = Field(default=200, gt=0)

    @model_validator(mode='after')
    def _check_delay(self):
        if self.delay_jitter_us > self.delay_mean_us:
            raise ValueError("delay_jitter_us não pode exceder delay_mean_us")
        return self


class ProtocolSpec(_Strict):
    # TDMA
    num_slots: int = Field(default=25, gt=0)
    slot_duration_us: int = Field(default=20_000, gt=0)
    min_own_slots: int = Field(default=1, ge=1)
    slot_selection: str = "lowest"
    schedule_duration_us: int = Field(default=1_000_000, gt=0)
    access_slot_us: int = Field(default=8_000, gt=0)
    access_slots: int = Field(default=12, gt=0)
    guard_us: int = Field(default=1_500, ge=0)
    gc_window_us: int = Field(default=4_000_000, gt=0)

    # Sincronização
    sync_duration_us: int = Field(default=500_000, gt=0)
    minislot_us: int = Field(default=10_000, gt=0)
    sync_threshold_us: float = Field(default=5_000.0, gt=0)
    p_tx: float = Field(default=0.2, ge=0, le=1)
    delta_estimate_us: Optional[float] = None
    delta_error_us: float = 0.0
    clock_skew_ppm: float = Field(default=0.0, ge=0, le=100)
    clock_offset_spread_us: float = Field(default=20_000.0, ge=0)

    # Ranging
    sigma_d: float = Field(default=0.05, ge=0)
    reply_latency_us: int = Field(default=300, gt=0)
    twr_window_us: int = Field(default=1_200, gt=0)
    max_discovery_polls: int = Field(default=4, ge=0)

    # EKF
    gate_m: float = Field(default=3.0, gt=0)
    q_pos: float = Field(default=4.0, ge=0)
    q_vel: float = Field(default=2.0, ge=0)
    eta_p: Point3 = (0.0011, 0.0004, 0.0045)
    eta_min: float = Field(default=1e-4, gt=0)
    default_height_m: float = 1.0

    @field_validator('slot_selection')
    @classmethod
    def _check_selection(cls, value: str) -> str:
        if value not in ('lowest', 'random'):
            raise ValueError("slot_selection deve ser 'lowest' ou 'random'")
        return value

    @field_validator('eta_p')
    @classmethod
    def _check_eta_p(cls, value: Point3) -> Point3:
        if min(value) <= 0:
            raise ValueError("componentes de eta_p devem ser positivas")
        return value

    @model_validator(mode='after')
    def _check_timing(self):
        if self.sync_duration_us % self.minislot_us:
            raise ValueError("sync_duration_us deve ser múltiplo de minislot_us")
        if 2 * self.guard_us >= self.slot_duration_us:
            raise ValueError("guard_us muito grande para o slot")
        if self.access_slots * self.access_slot_us > self.schedule_duration_us:
            raise ValueError("uma rodada de acesso não cabe na fase de escalonamento")
        return self

    @property
    def task_duration_us(self) -> int:
        return self.num_slots * self.slot_duration_us

    @property
    def cycle_duration_us(self) -> int:
        return self.sync_duration_us + self.schedule_duration_us + self.task_duration_us

    def delta_us(self, medium: MediumSpec) -> float:
        """δ usado na sincronização: SYN carimbado no início da transmissão"""
        base = self.delta_estimate_us
        if base is None:
            base = medium.airtime_us + medium.delay_mean_us
        return base + self.delta_error_us


class Scenario(_Strict):
    schema_version: int = Field(default=SCHEMA_VERSION, alias='schema')
    name: str = "scenario"
    floor: Optional[FloorPlan] = None
    anchors: List[AnchorSpec] = Field(default_factory=list)
    zones: List[ZoneSpec] = Field(default_factory=list)
    tags: List[TagSpec] = Field(min_length=1)
    medium: MediumSpec = Field(default_factory=MediumSpec)
    protocol: ProtocolSpec = Field(default_factory=ProtocolSpec)
    seed: int = Field(default=0, ge=0)
    duration_us: int = Field(default=10_000_000, gt=0)

    @field_validator('schema_version')
    @classmethod
    def _check_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"versão de esquema não suportada: {value}")
        return value

    @model_validator(mode='after')
    def _check_references(self):
        seen = set()
        for node_id in [a.id for a in self.anchors] + [t.id for t in self.tags]:
            if node_id in seen:
                raise ValueError(f"NodeId duplicado: {node_id}")
            seen.add(node_id)

        anchor_ids = {a.id for a in self.anchors}
        for zone in self.zones:
            unknown = sorted(set(zone.visible_anchors) - anchor_ids)
            if unknown:
                raise ValueError(f"zona {zone.name} referencia âncoras inexistentes: {unknown}")

        if self.floor is not None:
            for tag in self.tags:
                for waypoint in tag.waypoints:
                    if not self.floor.contains(waypoint):
                        raise ValueError(f"waypoint {waypoint} do tag {tag.id} fora da planta")
        return self

    def tag_ids(self) -> List[int]:
        return sorted(t.id for t in self.tags)

    def anchor_ids(self) -> List[int]:
        return sorted(a.id for a in self.anchors)

    def to_json_dict(self) -> dict:
        return self.model_dump(mode='json', by_alias=True)
