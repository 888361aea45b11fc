from django.conf import settings
from django.core.management.base import BaseCommand

from pnpdepth.mixins import PipelineCommandMixin
from scenes.generator import generate_many
from scenes.storage import MANIFEST_FIELDS, write_scenes


class Command(PipelineCommandMixin, BaseCommand):
    help = "Genera escenas RGB-D sintéticas y su manifest.csv"

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--n', type=int, default=None, help="Número de escenas")
        parser.add_argument('--seed', type=int, default=None, help="Semilla de la primera escena")
        parser.add_argument('--out', default=None, help="Directorio de salida")

    def handle(self, *args, **options):
        self.run_pipeline(self.generate, options)

    def generate(self, options):
        cfg = self.load_config(options['config'], n_scenes=options['n'], seed=options['seed'],
                               scene_dir=options['out'])
        out = cfg.scene_path() or (cfg.output_path() / 'scenes' if cfg.output_dir else settings.PNP_SCENE_DIR)
        scenes = generate_many(cfg.n_scenes, cfg.seed, cfg.scene_params())
        rows = write_scenes(out, scenes)
        self.stdout.write(','.join(MANIFEST_FIELDS))
        for row in rows:
            self.stdout.write(','.join(row[f] for f in MANIFEST_FIELDS))
        self.stdout.write(self.style.SUCCESS(f"{len(rows)} escenas en {out}"))
