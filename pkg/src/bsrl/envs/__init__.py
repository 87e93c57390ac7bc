from .dungeon import (
    ACTIONS,
    CHANNELS,
    DungeonConfig,
    DungeonEnv,
    DungeonGridState,
    GenerationError,
    dungeon_step,
    generate_dungeon,
    milestone_ids,
    milestones,
    render,
)
from .tabular import TabularEnv, TabularMDP, build_chain, interpolation_chain, random_lab_mdp
