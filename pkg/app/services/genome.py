"""16-gene encoding of the CNN hyperparameters and its decoding to a ModelSpec."""

from enum import Enum
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InvalidArgumentError, InvalidGenomeError
from app.models import ConvBlock, FcBlock, Genome, HeadSpec, ModelSpec

GeneValue = Union[int, float, str]

CONV_DIMS = (32, 64, 128, 256)
KERNEL_SIZES = (3, 5, 7)
ACTIVATIONS = ("tanh", "relu", "leaky_relu")
FC_WIDTHS = (512, 256, 128)
DROPOUT_RATES = (0.1, 0.2, 0.3, 0.5)

POOL_OUTPUT = 2


class Group(str, Enum):
    """Gene groups, in genome order."""
    CONV_DIMS = "G0"
    KERNELS = "G1"
    ACTIVATIONS = "G2"
    FC_WIDTHS = "G3"
    DROPOUTS = "G4"


# genes per group; activations cover conv1..conv4 then FC1..FC2
GROUP_SIZES = {
    Group.CONV_DIMS: 3,
    Group.KERNELS: 3,
    Group.ACTIVATIONS: 6,
    Group.FC_WIDTHS: 2,
    Group.DROPOUTS: 2,
}


class GeneAlphabet(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: tuple[GeneValue, ...]

    @field_validator("values")
    @classmethod
    def _distinct(cls, values: tuple[GeneValue, ...]) -> tuple[GeneValue, ...]:
        if not values:
            raise ValueError("alphabet must not be empty")
        if len(set(values)) != len(values):
            raise ValueError("alphabet values must be distinct")
        return values

    def __len__(self) -> int:
        return len(self.values)


class FirstConv(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = 3
    out_channels: int = 32
    kernel_size: int = 3


class SearchSpace(BaseModel):
    """Per-gene alphabets plus the fixed group layout."""
    model_config = ConfigDict(frozen=True)

    alphabets: tuple[GeneAlphabet, ...]
    groups: dict[Group, tuple[int, int]]
    fixed_first_conv: FirstConv = Field(default_factory=FirstConv)

    @model_validator(mode="after")
    def _partition(self) -> "SearchSpace":
        covered: list[int] = []
        for group in Group:
            start, stop = self.groups[group]
            covered.extend(range(start, stop))
            if len({self.alphabets[i] for i in range(start, stop)}) > 1:
                raise ValueError(f"genes of group {group.value} must share one alphabet")
        if sorted(covered) != list(range(len(self.alphabets))):
            raise ValueError("groups must partition the genome exactly")
        return self

    @classmethod
    def from_choices(
        cls,
        conv_dims: Sequence[int] = CONV_DIMS,
        kernels: Sequence[int] = KERNEL_SIZES,
        activations: Sequence[str] = ACTIVATIONS,
        fc_widths: Sequence[int] = FC_WIDTHS,
        dropouts: Sequence[float] = DROPOUT_RATES,
        first_conv: FirstConv | None = None,
    ) -> "SearchSpace":
        per_group = {
            Group.CONV_DIMS: conv_dims,
            Group.KERNELS: kernels,
            Group.ACTIVATIONS: activations,
            Group.FC_WIDTHS: fc_widths,
            Group.DROPOUTS: dropouts,
        }
        alphabets: list[GeneAlphabet] = []
        groups: dict[Group, tuple[int, int]] = {}
        for group, values in per_group.items():
            start = len(alphabets)
            alphabet = GeneAlphabet(values=tuple(values))
            alphabets.extend([alphabet] * GROUP_SIZES[group])
            groups[group] = (start, len(alphabets))
        return cls(alphabets=tuple(alphabets), groups=groups, fixed_first_conv=first_conv or FirstConv())

    @property
    def genome_length(self) -> int:
        return len(self.alphabets)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(a) for a in self.alphabets], dtype=np.int64)

    def value(self, genome: Genome, position: int) -> GeneValue:
        return self.alphabets[position].values[genome.genes[position]]

    def validate_genome(self, genome: Genome) -> None:
        if len(genome) != self.genome_length:
            raise InvalidGenomeError(f"genome has {len(genome)} genes, expected {self.genome_length}")
        for position, (gene, alphabet) in enumerate(zip(genome.genes, self.alphabets)):
            if gene >= len(alphabet):
                raise InvalidGenomeError(
                    f"gene {position} index {gene} outside alphabet of size {len(alphabet)}"
                )


def default_space() -> SearchSpace:
    return SearchSpace.from_choices()


def group_bounds(space: SearchSpace, group: Group | str) -> range:
    """Half-open index range of a gene group."""
    start, stop = space.groups[Group(group)]
    return range(start, stop)


def init_population(n: int, space: SearchSpace, rng: np.random.Generator) -> list[Genome]:
    """Draw n genomes, every gene uniform over its alphabet."""
    if n < 1:
        raise InvalidArgumentError("population size must be at least 1")
    draws = rng.integers(0, space.sizes, size=(n, space.genome_length))
    return [Genome(genes=tuple(int(g) for g in row)) for row in draws]


def genome_key(genome: Genome) -> str:
    return "-".join(str(g) for g in genome.genes)


def decode(genome: Genome, space: SearchSpace) -> ModelSpec:
    space.validate_genome(genome)
    dims = [space.value(genome, i) for i in group_bounds(space, Group.CONV_DIMS)]
    kernels = [space.value(genome, i) for i in group_bounds(space, Group.KERNELS)]
    acts = [space.value(genome, i) for i in group_bounds(space, Group.ACTIVATIONS)]
    widths = [space.value(genome, i) for i in group_bounds(space, Group.FC_WIDTHS)]
    rates = [space.value(genome, i) for i in group_bounds(space, Group.DROPOUTS)]

    first = space.fixed_first_conv
    conv_blocks = [ConvBlock(
        in_channels=first.in_channels,
        out_channels=first.out_channels,
        kernel_size=first.kernel_size,
        activation=acts[0],
    )]
    for dim, kernel, act in zip(dims, kernels, acts[1:4]):
        conv_blocks.append(ConvBlock(
            in_channels=conv_blocks[-1].out_channels,
            out_channels=dim,
            kernel_size=kernel,
            activation=act,
        ))

    fc_blocks = []
    in_features = conv_blocks[-1].out_channels * POOL_OUTPUT ** 2
    for width, act, rate in zip(widths, acts[4:6], rates):
        fc_blocks.append(FcBlock(in_features=in_features, out_features=width, activation=act, dropout_rate=rate))
        in_features = width

    return ModelSpec(
        conv_blocks=tuple(conv_blocks),
        pool_output=POOL_OUTPUT,
        fc_blocks=tuple(fc_blocks),
        head=HeadSpec(in_features=in_features, out_features=2),
    )
