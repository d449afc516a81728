import logging
from typing import List, Optional

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

from app.core.config import settings
from app.core.errors import InstanceError
from app.core.model import Coflow, FlowRequest, Instance, Mode, make_instance
from app.core.network import Network, fat_tree
from app.core.storage import load_network

logger = logging.getLogger(__name__)


class GenParams(BaseModel):
    """Random instance recipe. Sizes and weights are Poisson + 1, releases plain Poisson"""
    fat_tree_k: int = Field(default_factory=lambda: settings.GEN_FAT_TREE_K, ge=2)
    network_file: Optional[str] = None
    coflows: int = Field(default=10, ge=1)
    width: int = Field(default=4, ge=1)
    size_mean: float = Field(default_factory=lambda: settings.GEN_SIZE_MEAN, gt=0)
    release_mean: float = Field(default_factory=lambda: settings.GEN_RELEASE_MEAN, gt=0)
    weight_mean: float = Field(default_factory=lambda: settings.GEN_WEIGHT_MEAN, gt=0)
    mode: Mode = "paths-free"
    seed: int = 0


def _topology(params: GenParams) -> Network:
    if params.network_file:
        return load_network(params.network_file)
    return fat_tree(params.fat_tree_k)


def gen_instance(params: GenParams, network: Optional[Network] = None) -> Instance:
    network = network or _topology(params)
    servers = sorted(network.servers)
    pairs = len(servers) * (len(servers) - 1)
    if params.width > pairs:
        raise InstanceError(f"width {params.width} exceeds the {pairs} ordered server pairs")

    rng = np.random.default_rng(params.seed)
    coflows: List[Coflow] = []
    for _ in range(params.coflows):
        # w distinct ordered pairs, drawn without replacement
        picks = rng.choice(pairs, size=params.width, replace=False)
        flows = []
        for p in sorted(int(x) for x in picks):
            src = servers[p // (len(servers) - 1)]
            rest = [s for s in servers if s != src]
            dst = rest[p % (len(servers) - 1)]
            size = 1.0 if params.mode == "packet" else float(rng.poisson(params.size_mean) + 1)
            release = float(rng.poisson(params.release_mean))
            path = None
            if params.mode != "paths-free":
                options = sorted(nx.all_shortest_paths(network.graph, src, dst))
                path = network.path(options[int(rng.integers(len(options)))], src, dst)
            flows.append(FlowRequest(src=src, dst=dst, size=size, release=release, path=path))
        weight = float(rng.poisson(params.weight_mean) + 1)
        coflows.append(Coflow(weight=weight, flows=flows))

    instance = make_instance(network, coflows, params.mode)
    logger.info("[GEN] %d coflows x %d flows on %r (seed %d)", params.coflows, params.width, network, params.seed)
    return instance
