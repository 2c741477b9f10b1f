from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from occlubench.annotations import DegradationClass, PatchAsset, PatchLibrary
from occlubench.synthetic import make_patch_asset

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def build_library(seed: int = 11, per_class: int = 2) -> PatchLibrary:
    """In-memory demo library with assets for every class."""
    rng = rng_for(seed)
    assets: dict[DegradationClass, list[PatchAsset]] = {}
    for class_tag in DegradationClass:
        entries = []
        for k in range(per_class):
            raster = make_patch_asset(rng, class_tag)
            effective = int(np.count_nonzero(raster[:, :, 3] > 127))
            entries.append(PatchAsset(asset_id=f"{class_tag.value.lower()}_{k}",
                                      class_tag=class_tag, raster=raster,
                                      effective_area=effective))
        assets[class_tag] = entries
    return PatchLibrary(assets)


@pytest.fixture(scope="session")
def library() -> PatchLibrary:
    return build_library()


@pytest.fixture()
def rng() -> np.random.Generator:
    return rng_for(20240816)
