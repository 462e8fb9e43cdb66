"""Agent ecologies sharing toroidal trail fields."""
from .boids import BoidParams, Boids, step_boids
from .field import TrailField, field_diffuse_decay
from .modulation import ModulationMap, modulate
from .physarum import PhysarumAgents, PhysarumSpecies, step_physarum
from .termites import DepositLog, TermiteAgents, TermiteParams, step_termites
from .world import Ecology, EcologyConfig, load_checkpoint, save_checkpoint

__all__ = [
    "BoidParams", "Boids", "DepositLog", "Ecology", "EcologyConfig", "ModulationMap",
    "PhysarumAgents", "PhysarumSpecies", "TermiteAgents", "TermiteParams", "TrailField",
    "field_diffuse_decay", "load_checkpoint", "modulate", "save_checkpoint", "step_boids",
    "step_physarum", "step_termites",
]
