from django.core.management.base import BaseCommand

from depthnet import checkpoint
from depthnet.networks import build
from depthnet.training import DivergenceError, beats_mean_predictor, train
from evaluation.reports import write_csv
from pnpdepth.mixins import HELDOUT_SEED_OFFSET, PipelineCommandMixin
from scenes.generator import generate_many

CURVE_FIELDS = ['epoch', 'loss']


class Command(PipelineCommandMixin, BaseCommand):
    help = "Entrena una red de profundidad y guarda el checkpoint y la curva de pérdida"

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--scenes', default=None, help="Directorio de escenas (manifest.csv)")
        parser.add_argument('--out', default=None, help="Ruta del checkpoint")

    def handle(self, *args, **options):
        self.run_pipeline(self.fit, options)

    def fit(self, options):
        cfg = self.load_config(options['config'])
        scenes = self.load_scenes(cfg, options['scenes'], heldout=False)
        model = build(cfg.arch, cfg.input_mode, seed=cfg.seed)
        out = options['out'] or cfg.output_path() / f"{cfg.arch}_{cfg.input_mode.replace('+', '_')}.pnpd"
        try:
            train(model, scenes, cfg.train_config())
        except DivergenceError as e:
            checkpoint.save(e.model, out)
            self.stderr.write(f"Checkpoint de la última época finita en {out}")
            raise
        checkpoint.save(model, out)

        curve = [{'epoch': str(i + 1), 'loss': f"{v:.6f}"} for i, v in enumerate(model.history)]
        curve_path = write_csv(cfg.output_path() / 'training_curve.csv', curve, CURVE_FIELDS)

        heldout = generate_many(max(1, cfg.n_scenes // 4), cfg.seed + HELDOUT_SEED_OFFSET, cfg.scene_params())
        ok, ours, ref = beats_mean_predictor(model, scenes, heldout, cfg.n_samples, cfg.seed)
        self.stdout.write(f"RMSE validación {ours:.4f} (media constante {ref:.4f})")
        self.stdout.write(self.style.SUCCESS(f"Checkpoint en {out}, curva en {curve_path}")
                          if ok else self.style.WARNING(f"Entrenamiento marcado como fallido; checkpoint en {out}"))
