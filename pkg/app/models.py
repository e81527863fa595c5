"""Pydantic models shared across the GA, the network and the CLI."""

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InvalidGenomeError

Activation = Literal["tanh", "relu", "leaky_relu"]


class Genome(BaseModel):
    """Fixed-length vector of gene indices; one row of the N x 16 population array."""
    model_config = ConfigDict(frozen=True)

    genes: tuple[int, ...] = Field(..., description="Index into each gene's alphabet")

    @field_validator("genes")
    @classmethod
    def _non_negative(cls, genes: tuple[int, ...]) -> tuple[int, ...]:
        if any(g < 0 for g in genes):
            raise ValueError("gene indices must be non-negative")
        return genes

    def __len__(self) -> int:
        return len(self.genes)

    def to_line(self) -> str:
        return " ".join(str(g) for g in self.genes)

    @classmethod
    def from_line(cls, line: str) -> "Genome":
        """Parse the one-line form: space-separated decimal indices."""
        tokens = line.split()
        if not tokens or not all(t.isascii() and t.isdigit() for t in tokens):
            raise InvalidGenomeError(f"malformed genome line: {line!r}")
        return cls(genes=tuple(int(t) for t in tokens))


class ConvBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(..., gt=0)
    out_channels: int = Field(..., gt=0)
    kernel_size: int = Field(..., gt=0)
    activation: Activation

    @field_validator("kernel_size")
    @classmethod
    def _odd(cls, k: int) -> int:
        if k % 2 == 0:
            raise ValueError("kernel size must be odd")
        return k


class FcBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_features: int = Field(..., gt=0)
    out_features: int = Field(..., gt=0)
    activation: Activation
    dropout_rate: float = Field(..., ge=0.0, lt=1.0)


class HeadSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_features: int = Field(..., gt=0)
    out_features: int = 2


class ModelSpec(BaseModel):
    """Concrete architecture decoded from a genome."""
    model_config = ConfigDict(frozen=True)

    conv_blocks: tuple[ConvBlock, ...]
    pool_output: int = Field(2, gt=0)
    fc_blocks: tuple[FcBlock, ...]
    head: HeadSpec

    @model_validator(mode="after")
    def _chained(self) -> "ModelSpec":
        if len(self.conv_blocks) != 4 or len(self.fc_blocks) != 2:
            raise ValueError("expected 4 conv blocks and 2 FC blocks")
        for prev, block in zip(self.conv_blocks, self.conv_blocks[1:]):
            if block.in_channels != prev.out_channels:
                raise ValueError("conv channel chain is broken")
        flat = self.conv_blocks[-1].out_channels * self.pool_output ** 2
        if self.fc_blocks[0].in_features != flat:
            raise ValueError(f"FC1 must take {flat} features")
        if self.fc_blocks[1].in_features != self.fc_blocks[0].out_features:
            raise ValueError("FC chain is broken")
        if self.head.in_features != self.fc_blocks[1].out_features:
            raise ValueError("head does not match FC2 width")
        if self.head.out_features != 2:
            raise ValueError("head must emit 2 classes")
        return self


class GaConfig(BaseModel):
    population_size: int = Field(50, gt=0)
    max_generations: int = Field(100, ge=0)
    tournament_size: int = Field(5, gt=0)
    parents_per_generation: int = Field(10, gt=0)
    crossover_rate: float = Field(0.6, ge=0.0, le=1.0)
    offspring_count: Optional[int] = Field(None, gt=0, description="lambda; defaults to parents_per_generation")
    sort_conv_dims: bool = Field(True, description="Greedy increasing reorder of conv dims before mutation")
    master_seed: int = 0

    @model_validator(mode="after")
    def _consistent(self) -> "GaConfig":
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size exceeds population_size")
        if self.parents_per_generation > self.population_size:
            raise ValueError("parents_per_generation exceeds population_size")
        if self.parents_per_generation % 2:
            raise ValueError("parents_per_generation must be even")
        if self.lam > self.parents_per_generation:
            raise ValueError("offspring_count exceeds parents_per_generation")
        return self

    @property
    def lam(self) -> int:
        return self.offspring_count or self.parents_per_generation


class TrainConfig(BaseModel):
    epochs: int = Field(20, gt=0)
    learning_rate: float = Field(5e-4, gt=0.0)
    batch_size: int = Field(16, gt=0)


class Individual(BaseModel):
    genome: Genome
    fitness: Optional[float] = Field(None, ge=0.0, le=1.0)


class GenerationRecord(BaseModel):
    generation: int
    best_fitness: float
    mean_fitness: float
    worst_fitness: float
    best_genome_key: str
    evaluations_performed: int


class EvaluationReport(BaseModel):
    genome_key: str
    validation_accuracy: float = Field(..., ge=0.0, le=1.0)
    loss_trace: list[float] = Field(default_factory=list)
    wall_time_s: float = 0.0
    diverged: bool = False


class CheckpointEntry(BaseModel):
    genes: str = Field(..., description="Genome line")
    fitness: float


class Checkpoint(BaseModel):
    """Everything needed to continue a run after a given generation."""
    generation: int
    config: dict[str, Any]
    population: list[CheckpointEntry]
    rng_state: dict[str, Any]
    cache: dict[str, float] = Field(default_factory=dict)
    best: Optional[CheckpointEntry] = Field(None, description="Best individual seen in any generation")


class GradCheckResult(BaseModel):
    name: str
    max_relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance
