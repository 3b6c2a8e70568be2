"""Soft-shadow rendering, dataset forging, and a one-step shadow denoiser."""

from umbra.bvh import Bvh, build_bvh
from umbra.composite import CompositeInputs, composite
from umbra.config import RunConfig, load_config, merge_flags, save_config
from umbra.forge import (DatasetManifest, ForgeConfig, forge_dataset,
                         forge_tracks, generate_track, make_mesh_corpus,
                         read_manifest, write_manifest)
from umbra.mesh import TriangleMesh, load_obj, normalize_mesh, save_obj, settle
from umbra.metrics import (MetricReport, aggregate, boundary_gradient,
                           evaluate_pair, rmse, scaled_rmse, soft_iou, zncc)
from umbra.render import (RenderTriplet, read_triplet, render_mask,
                          render_preview, render_shadow_map, render_triplet,
                          write_triplet)
from umbra.scene import (Camera, LightParams, blob_map, camera_project,
                         default_camera, light_position)

__version__ = "0.1.0"

__all__ = [
    "Bvh",
    "Camera",
    "CompositeInputs",
    "DatasetManifest",
    "ForgeConfig",
    "LightParams",
    "MetricReport",
    "RenderTriplet",
    "RunConfig",
    "TriangleMesh",
    "aggregate",
    "blob_map",
    "boundary_gradient",
    "build_bvh",
    "camera_project",
    "composite",
    "default_camera",
    "evaluate_pair",
    "forge_dataset",
    "forge_tracks",
    "generate_track",
    "load_config",
    "load_obj",
    "light_position",
    "make_mesh_corpus",
    "merge_flags",
    "normalize_mesh",
    "read_manifest",
    "read_triplet",
    "render_mask",
    "render_preview",
    "render_shadow_map",
    "render_triplet",
    "rmse",
    "save_config",
    "save_obj",
    "scaled_rmse",
    "settle",
    "soft_iou",
    "write_manifest",
    "write_triplet",
    "zncc",
    "__version__",
]
