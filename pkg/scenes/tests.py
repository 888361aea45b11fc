import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from pnpdepth.errors import ConfigurationError
from scenes import netpbm
from scenes.generator import SceneParams, generate, generate_many, ground_plane
from scenes.storage import read_manifest, read_scenes, write_scenes


class GeneratorTests(SimpleTestCase):

    def test_same_seed_same_scene(self):
        a, b = generate(11), generate(11)
        self.assertEqual(a.rgb.tobytes(), b.rgb.tobytes())
        self.assertEqual(a.depth.tobytes(), b.depth.tobytes())

    def test_different_seeds_differ(self):
        self.assertNotEqual(generate(1).depth.tobytes(), generate(2).depth.tobytes())

    def test_shapes_and_ranges(self):
        params = SceneParams(height=32, width=40)
        scene = generate(0, params)
        self.assertEqual(scene.rgb.shape, (3, 32, 40))
        self.assertEqual(scene.depth.shape, (1, 32, 40))
        self.assertGreaterEqual(scene.depth.data.min(), params.d_min)
        self.assertLessEqual(scene.depth.data.max(), params.d_max)
        self.assertGreaterEqual(scene.rgb.data.min(), 0.0)
        self.assertLessEqual(scene.rgb.data.max(), 1.0)

    def test_zbuffer_matches_per_pixel_minimum(self):
        params = SceneParams(height=24, width=28, n_objects=5)
        scene = generate(7, params)
        ground = ground_plane(params)
        expected = np.empty((params.height, params.width))
        for v in range(params.height):
            for u in range(params.width):
                candidates = [ground[v, u]]
                for obj in scene.objects:
                    d = obj.depth_at(v, u)
                    if d is not None:
                        candidates.append(d)
                expected[v, u] = min(max(min(candidates), params.d_min), params.d_max)
        np.testing.assert_allclose(scene.depth.data[0], expected, atol=1e-12)

    def test_objects_leave_occlusion_edges(self):
        params = SceneParams()
        for scene in generate_many(5, 100, params):
            d = scene.depth.data[0]
            jumps = max(np.abs(np.diff(d, axis=0)).max(), np.abs(np.diff(d, axis=1)).max())
            self.assertGreater(jumps, 0.1 * params.depth_range)

    def test_empty_scene_is_the_ground_ramp(self):
        params = SceneParams(n_objects=0)
        scene = generate(3, params)
        np.testing.assert_allclose(scene.depth.data[0], ground_plane(params))
        self.assertAlmostEqual(scene.depth.data[0, 0, 0], params.d_max)
        self.assertAlmostEqual(scene.depth.data[0, -1, 0], params.d_min)

    def test_invalid_params(self):
        with self.assertRaises(ConfigurationError):
            generate(0, SceneParams(height=8))
        with self.assertRaises(ConfigurationError):
            generate(0, SceneParams(d_min=5.0, d_max=1.0))


class NetpbmTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_depth_graymap_header_and_precision(self):
        depth = generate(4).depth.data
        path = netpbm.write_depth(self.dir / 'd.pgm', depth)
        raw = path.read_bytes()
        self.assertTrue(raw.startswith(b'P5'))
        self.assertIn(b'65535', raw[:32])
        back = netpbm.read_depth(path)
        self.assertEqual(back.shape, depth.shape)
        self.assertLessEqual(np.abs(back - depth).max(), 0.5 / netpbm.MM_PER_METER + 1e-12)

    def test_pixmap_is_eight_bit_rgb(self):
        rgb = generate(4).rgb.data
        path = netpbm.write_ppm(self.dir / 'c.ppm', rgb)
        self.assertTrue(path.read_bytes().startswith(b'P6'))
        self.assertLessEqual(np.abs(netpbm.read_ppm(path) - rgb).max(), 0.5 / 255 + 1e-12)

    def test_signed_map_zero_and_sidecar(self):
        values = np.array([[-2.0, 0.0], [1.0, 2.0]])
        path, scale = netpbm.write_signed_map(self.dir / 's.pgm', values)
        self.assertEqual(scale, 2.0)
        pixels = netpbm.read_pgm16(path)
        self.assertEqual(pixels[0, 1], netpbm.SIGNED_ZERO)
        np.testing.assert_allclose(netpbm.decode_signed_map(pixels, scale), values, atol=1e-4)
        self.assertIn('scale_m', path.with_suffix('.txt').read_text(encoding='utf-8'))

    def test_garbage_file_is_rejected(self):
        bad = self.dir / 'bad.pgm'
        bad.write_bytes(b'not an image')
        with self.assertRaises(ConfigurationError):
            netpbm.read_depth(bad)


class StorageTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_read(self):
        scenes = generate_many(3, 20, SceneParams(height=16, width=20))
        rows = write_scenes(self.dir, scenes)
        self.assertEqual([r['seed'] for r in rows], ['20', '21', '22'])
        self.assertEqual(len(read_manifest(self.dir)), 3)
        back = read_scenes(self.dir)
        self.assertEqual(len(back), 3)
        self.assertEqual(back[1].seed, 21)
        self.assertLessEqual(np.abs(back[2].depth.data - scenes[2].depth.data).max(), 1e-3)

    def test_rewrite_is_byte_identical(self):
        scenes = generate_many(2, 5, SceneParams(height=16, width=16))
        first = write_scenes(self.dir / 'a', scenes)
        second = write_scenes(self.dir / 'b', scenes)
        self.assertEqual([r['sha256'] for r in first], [r['sha256'] for r in second])

    def test_corrupt_scene_names_the_file(self):
        write_scenes(self.dir, generate_many(1, 0, SceneParams(height=16, width=16)))
        (self.dir / 'scene_0000_depth.pgm').write_bytes(b'P5\n')
        with self.assertRaisesMessage(ConfigurationError, 'scene_0000_depth.pgm'):
            read_scenes(self.dir)

    def test_flipped_pixel_fails_the_checksum(self):
        write_scenes(self.dir, generate_many(2, 0, SceneParams(height=16, width=16)))
        path = self.dir / 'scene_0001_depth.pgm'
        data = bytearray(path.read_bytes())
        data[-1] ^= 0x01
        path.write_bytes(bytes(data))
        self.assertEqual(netpbm.read_depth(path).shape, (1, 16, 16))
        with self.assertRaisesMessage(ConfigurationError, 'scene_0001_depth.pgm'):
            read_scenes(self.dir)
        self.assertEqual(len(read_scenes(self.dir, limit=1)), 1)

    def test_missing_manifest(self):
        with self.assertRaises(ConfigurationError):
            read_scenes(self.dir / 'nowhere')
