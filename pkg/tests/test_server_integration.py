"""Primary pipeline driving the reference server over the wire protocol."""
from pathlib import Path

import numpy as np
import pytest

from zoomseg.backends import OracleBackend, OracleBackendConfig, PassthroughCombiner
from zoomseg.fixtures import make_label_map, render_image
from zoomseg.pipeline import PipelineConfig, run_pipeline
from zoomseg.protocol import EndpointPool, ExternalCombiner
from zoomseg.tiling import build_scale_plan

SERVER_JS = Path(__file__).resolve().parent.parent / "server" / "dist" / "server.js"

pytestmark = pytest.mark.skipif(
    not SERVER_JS.exists(),
    reason="reference server not built (npm --prefix server install && npm --prefix server run build)",
)


def test_pipeline_with_external_passthrough_combiner_matches_in_process():
    rng = np.random.default_rng(77)
    gt = make_label_map(rng, 64, 3, detail_scale=1.0)
    image = render_image(rng, gt, 3)
    plan = build_scale_plan(64, 64, 16, 16, [(64, 64), (32, 32), (16, 16)])
    cfg = PipelineConfig(plan=plan, classes=3, seed=5, k=100)

    def backend():
        return OracleBackend(
            plan, 3,
            OracleBackendConfig(gt=gt, blur_sigma_at_coarsest=1.5, label_noise_rate=0.05),
            seed=5,
        )

    local_maps, _ = run_pipeline(image, cfg, backend(), PassthroughCombiner())

    pool = EndpointPool(["node", str(SERVER_JS), "--mode", "passthrough"], timeout=10.0)
    try:
        served_maps, _ = run_pipeline(image, cfg, backend(), ExternalCombiner(pool))
    finally:
        pool.close()

    assert len(local_maps) == len(served_maps)
    for a, b in zip(local_maps, served_maps):
        assert a.data.tobytes() == b.data.tobytes()


def test_pipeline_with_external_combiner_and_worker_pool_is_deterministic():
    rng = np.random.default_rng(88)
    gt = make_label_map(rng, 64, 3, detail_scale=1.0)
    image = render_image(rng, gt, 3)
    plan = build_scale_plan(64, 64, 16, 16, [(64, 64), (32, 32), (16, 16)])

    def run_with(workers, per_worker):
        cfg = PipelineConfig(plan=plan, classes=3, seed=9, k=100, workers=workers)
        backend = OracleBackend(
            plan, 3,
            OracleBackendConfig(gt=gt, blur_sigma_at_coarsest=1.5, label_noise_rate=0.05),
            seed=9,
        )
        pool = EndpointPool(
            ["node", str(SERVER_JS), "--mode", "passthrough"],
            per_worker=per_worker, timeout=10.0,
        )
        try:
            maps, _ = run_pipeline(image, cfg, backend, ExternalCombiner(pool))
        finally:
            pool.close()
        return maps[-1].data.tobytes()

    serial = run_with(1, per_worker=False)
    pooled = run_with(3, per_worker=True)
    assert serial == pooled
