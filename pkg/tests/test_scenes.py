import numpy as np

from empi.metrics import psnr
from empi.mpi import init_mpi, render_view
from empi.scenes import demo_scene, ground_truth_scene


class TestDemoScene:
    def test_shapes_and_ranges(self):
        rgb, depth, cam = demo_scene(48)
        assert rgb.shape == (48, 48, 3)
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0
        assert depth.data.shape == (48, 48)
        assert depth.data.min() >= 2.0 and depth.data.max() <= 6.0
        assert (cam.width, cam.height) == (48, 48)

    def test_deterministic(self):
        a, da, _ = demo_scene(32)
        b, db, _ = demo_scene(32)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(da.data, db.data)


class TestGroundTruthScene:
    def test_one_opaque_texel_per_column(self):
        gt = ground_truth_scene(planes=4, size=32)
        occupied = gt.volume.texels[..., 3] > 0
        assert np.all(occupied.sum(axis=0) == 1)
        np.testing.assert_array_equal(occupied.argmax(axis=0), gt.assign)

    def test_source_view_matches_identity_render(self):
        gt = ground_truth_scene(planes=6, size=48)
        rgb, depth = gt.source_view()
        rendered = render_view(gt.volume, gt.volume.reference, gt.volume.reference.pose)
        # opaque planes absorb all but exp(-20) of the light
        assert np.abs(rendered - rgb).max() < 1e-8
        d = gt.volume.plane_depths
        assert set(np.unique(depth.data)) <= {np.float32(v) for v in d}

    def test_init_from_source_reconstructs_occupied_texels(self):
        gt = ground_truth_scene(planes=6, size=48)
        rgb, depth = gt.source_view()
        vol = init_mpi(
            rgb, depth, gt.volume.reference, 6, gt.volume.expansion,
            depth_range=(2.0, 8.0),
        ).volume
        oy, ox = gt.volume.offset_y, gt.volume.offset_x
        h, w = 48, 48
        crop = np.s_[:, oy : oy + h, ox : ox + w]
        # same plane assignment and same sigma/rgb on the source crop
        got_occ = vol.texels[crop][..., 3] > 0
        want_occ = gt.volume.texels[crop][..., 3] > 0
        np.testing.assert_array_equal(got_occ, want_occ)
        np.testing.assert_allclose(
            vol.texels[crop][got_occ], gt.volume.texels[crop][want_occ], atol=1e-6
        )

    def test_uses_full_expanded_canvas(self):
        gt = ground_truth_scene(planes=4, size=32, a=1.25)
        assert gt.volume.height == 40 and gt.volume.width == 40
        occupied = gt.volume.texels[..., 3] > 0
        assert occupied.any(axis=0).all()

    def test_held_out_render_is_clean(self):
        gt = ground_truth_scene(planes=6, size=48)
        pose = gt.volume.reference.pose
        a = render_view(gt.volume, gt.volume.reference, pose)
        b = gt.source_view()[0]
        assert psnr(a, b) >= 80.0
