import csv
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from depthnet import checkpoint
from depthnet.networks import build
from pnpdepth.errors import ConfigurationError
from pnpdepth.pipeline import CallableStep
from pnpdepth.runconfig import CONFIG_KEYS, dump_run_config, load_run_config, parse_run_config
from pnpdepth.seeding import derive_seed
from refinement.pnp import UpdateRule
from tensorcore.losses import LossKind


class RunConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = load_run_config()
        self.assertEqual(cfg.arch, 'plain_cnn')
        self.assertEqual((cfg.height, cfg.width), (48, 64))
        self.assertIsNone(cfg.n_samples)
        pnp = cfg.pnp_config()
        self.assertIsNone(pnp.tap)
        self.assertEqual(pnp.alpha, 0.01)
        self.assertIs(pnp.update_rule, UpdateRule.SIGN)
        self.assertEqual(cfg.train_config().sample_range, (10, 500))

    def test_file_values_and_case(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.env'
            path.write_text("# barrido\narch=EncDec\nloss=BERHU\niterations=12\nn_samples=40\n", encoding='utf-8')
            cfg = load_run_config(path)
        self.assertEqual(cfg.arch, 'encdec')
        self.assertIs(cfg.pnp_config().loss_kind, LossKind.BERHU)
        self.assertEqual(cfg.pnp_config().iterations, 12)
        self.assertEqual(cfg.n_samples, 40)

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigurationError, 'unknown config key(s) stepsize'):
            parse_run_config({'stepsize': '0.1'})

    def test_invalid_values(self):
        for raw in ({'alpha': '0'}, {'update_rule': 'momentum'}, {'d_min': '5', 'd_max': '1'},
                    {'arch': 'encdec', 'height': '50'}, {'lidar_preset': 'VLP-8'},
                    {'train_samples_min': '10', 'train_samples_max': ''}):
            with self.assertRaises(ConfigurationError, msg=str(raw)):
                parse_run_config(raw)

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_run_config('/nonexistent/run.env')

    @override_settings(PNP_SEED='7')
    def test_environment_seed_wins(self):
        self.assertEqual(parse_run_config({'seed': '3'}).seed, 7)

    def test_dump_lists_every_key(self):
        text = dump_run_config(load_run_config(overrides={'seed': 5}))
        self.assertEqual([line.split('=')[0] for line in text.splitlines()], CONFIG_KEYS)
        self.assertIn('seed=5\n', text)


class PipelineTests(SimpleTestCase):

    def test_safe_execute_collects_errors(self):
        def explode():
            raise ConfigurationError("bad value")

        outcome = CallableStep(explode, label='explode').safe_execute()
        self.assertFalse(outcome['success'])
        self.assertIn('bad value', outcome['errors'][0])
        self.assertEqual(CallableStep(lambda: 4).safe_execute()['result'], 4)

    def test_derived_seeds(self):
        self.assertEqual(derive_seed(1, 2), derive_seed(1, 2))
        self.assertNotEqual(derive_seed(1, 2), derive_seed(2, 1))


class CommandTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def config(self, **values) -> str:
        values = {'height': 16, 'width': 16, 'n_objects': 2, 'n_scenes': 2,
                  'output_dir': str(self.tmp), **values}
        path = self.tmp / 'run.env'
        path.write_text(''.join(f"{k}={v}\n" for k, v in values.items()), encoding='utf-8')
        return str(path)

    def call(self, *args, **options):
        out, err = StringIO(), StringIO()
        call_command(*args, stdout=out, stderr=err, **options)
        return out.getvalue(), err.getvalue()

    def checkpoint(self) -> str:
        return str(checkpoint.save(build('plain_cnn', 'sd', seed=0), self.tmp / 'model.pnpd'))

    def test_gen_is_reproducible(self):
        first, _ = self.call('gen', self.config(), n=1, seed=3, out=str(self.tmp / 'a'))
        second, _ = self.call('gen', self.config(), n=1, seed=3, out=str(self.tmp / 'b'))
        self.assertEqual(first.splitlines()[:2], second.splitlines()[:2])
        self.assertEqual((self.tmp / 'a' / 'scene_0000_depth.pgm').read_bytes(),
                         (self.tmp / 'b' / 'scene_0000_depth.pgm').read_bytes())

    def test_gen_without_scenes(self):
        self.call('gen', self.config(), n=0, out=str(self.tmp / 'empty'))
        manifest = (self.tmp / 'empty' / 'manifest.csv').read_text(encoding='utf-8')
        self.assertEqual(manifest, 'index,seed,rgb,depth,sha256\n')

    def test_train_writes_checkpoint_and_curve(self):
        out = self.tmp / 'trained.pnpd'
        self.call('train', self.config(epochs=2, batch_size=2), out=str(out))
        self.assertEqual(checkpoint.load(out).arch.value, 'plain_cnn')
        curve = (self.tmp / 'training_curve.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(curve[0], 'epoch,loss')
        self.assertEqual(len(curve), 3)

    def test_train_divergence_exits_with_numeric_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('train', self.config(epochs=3, learning_rate=1e200, train_loss='l2'),
                      out=str(self.tmp / 'diverged.pnpd'))
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertTrue((self.tmp / 'diverged.pnpd').is_file())

    def test_refine_without_iterations_reports_equal_rows(self):
        self.call('refine', self.config(iterations=0), checkpoint=self.checkpoint())
        with open(self.tmp / 'refine_report.csv', newline='', encoding='utf-8') as fh:
            before, after = list(csv.DictReader(fh))
        self.assertEqual(before['method'], 'plain_cnn')
        self.assertTrue(after['method'].startswith('plain_cnn+pnp'))
        for key in ('rmse', 'mae', 'mre'):
            self.assertEqual(after[key], f"{before[key]} (0.0%)")
        for key in ('d1', 'd2', 'd3'):
            self.assertEqual(after[key], before[key])

    def test_refine_with_maps(self):
        self.call('refine', self.config(iterations=2), checkpoint=self.checkpoint(), maps=True)
        self.assertTrue((self.tmp / 'scene_0001_gain.pgm').is_file())
        self.assertTrue((self.tmp / 'scene_0001_gain.txt').is_file())

    def test_corrupt_checkpoint(self):
        path = Path(self.checkpoint())
        data = bytearray(path.read_bytes())
        data[40] ^= 0xFF
        path.write_bytes(bytes(data))
        with self.assertRaisesMessage(CommandError, 'checkpoint corrupt') as ctx:
            self.call('refine', self.config(), checkpoint=str(path))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_corrupt_scene_file(self):
        scene_dir = self.tmp / 'scenes'
        self.call('gen', self.config(), n=2, out=str(scene_dir))
        path = scene_dir / 'scene_0000_rgb.ppm'
        data = bytearray(path.read_bytes())
        data[-1] ^= 0x01
        path.write_bytes(bytes(data))
        with self.assertRaisesMessage(CommandError, 'scene_0000_rgb.ppm') as ctx:
            self.call('refine', self.config(scene_dir=scene_dir), checkpoint=self.checkpoint())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_unknown_config_key_exits_with_usage_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('refine', self.config(stepsize=1), checkpoint=self.checkpoint())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_sweep_rejects_unknown_kind(self):
        with self.assertRaisesMessage(CommandError, 'invalid choice'):
            self.call('sweep', '--kind', 'depth', '--checkpoint', self.checkpoint())

    def test_sweep_writes_csv(self):
        out = self.tmp / 'iters.csv'
        self.call('sweep', self.config(), kind='iters', checkpoint=self.checkpoint(),
                  values='0,1,3', out=str(out), no_runtime=True)
        rows = list(csv.DictReader(out.read_text(encoding='utf-8').splitlines()))
        self.assertEqual([r['setting'] for r in rows], ['0', '1', '3'])
        self.assertEqual(rows[0]['rmse_gain'], '0.0%')
        self.assertEqual({r['runtime_s'] for r in rows}, {''})

    def test_time_single_run_warns(self):
        _, err = self.call('time', self.config(n_scenes=1), checkpoint=self.checkpoint(), runs=1)
        self.assertIn('Solo 1 repeticiones', err)
        self.assertTrue((self.tmp / 'timing.csv').is_file())
