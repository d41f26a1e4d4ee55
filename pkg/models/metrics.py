"""
📊 UWB Swarm Tracker - Modelos de métricas
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class TagError(BaseModel):
    tag: int
    update_type: str  # "all" agrega todos os tipos
    samples: int
    rmse: float
    mae: float
    rmse_xy: float
    mae_xy: float


class SyncCycle(BaseModel):
    cycle: int
    tags: int
    max_offset_us: float  # maior |desvio médio para os vizinhos|
    mean_abs_offset_us: float
    max_update_us: float
    synchronized: int


class ScheduleTable(BaseModel):
    cycle: int
    tag: int
    own: List[int]
    recv: List[Optional[int]]
    converged: bool


class RunMetrics(BaseModel):
    scenario: str
    seed: int
    duration_us: int
    errors: List[TagError] = Field(default_factory=list)
    collisions: Dict[str, int] = Field(default_factory=dict)
    task_collisions: int = 0
    delivery: Dict[str, Dict[str, int]] = Field(default_factory=dict)
    sync: List[SyncCycle] = Field(default_factory=list)
    schedules: List[ScheduleTable] = Field(default_factory=list)
    slot_conflicts: int = 0
    slot_utilization: float = 0.0

    def error_for(self, tag: int, update_type: str = "all") -> Optional[TagError]:
        for entry in self.errors:
            if entry.tag == tag and entry.update_type == update_type:
                return entry
        return None
