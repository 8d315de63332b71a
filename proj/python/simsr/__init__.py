"""Learned super-resolution of coarse lattice simulations onto detailed surfaces."""

from ._simsr import (
    Dataset,
    DisplacementFrame,
    EmbeddingWeights,
    ErrorStats,
    FrameSet,
    LatticeMesh,
    Model,
    NeighborhoodTable,
    Precomputed,
    RbfInterpolator,
    SimsrError,
    SurfaceMesh,
    VertexErrors,
    aggregate,
    box_lattice,
    embed_surface,
    embedded_predict,
    export_heatmap,
    gen_config,
    generate,
    grad_check_sine,
    linear_assignment,
    load_dataset,
    load_lattice,
    load_surface,
    mls_reconstruct,
    model_config,
    per_vertex_error,
    perturb_force,
    positional_encode,
    precompute,
    read_frames,
    read_table,
    write_dataset,
    write_frames,
    write_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]
