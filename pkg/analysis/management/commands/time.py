from django.core.management.base import BaseCommand

from analysis.timing import MIN_RUNS, TIMING_FIELDS, time_inference
from evaluation.reports import write_csv
from pnpdepth.mixins import PipelineCommandMixin


class Command(PipelineCommandMixin, BaseCommand):
    help = "Mide el tiempo de inferencia base y refinada"

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--checkpoint', required=True, help="Checkpoint .pnpd")
        parser.add_argument('--runs', type=int, default=MIN_RUNS)
        parser.add_argument('--scenes', default=None, help="Directorio de escenas")
        parser.add_argument('--out', default=None, help="CSV de salida")

    def handle(self, *args, **options):
        self.run_pipeline(self.measure, options)

    def measure(self, options):
        cfg = self.load_config(options['config'])
        model = self.load_model(options['checkpoint'])
        scene = self.load_scenes(cfg, options['scenes'])[0]
        sparse = self.sparse_for(cfg, scene, 0)
        result = time_inference(model, model.input_for(scene, sparse), sparse, cfg.pnp_config(),
                                runs=options['runs'])
        out = options['out'] or cfg.output_path() / 'timing.csv'
        path = write_csv(out, [result.row()], TIMING_FIELDS)
        if not result.reliable:
            self.stderr.write(self.style.WARNING(f"Solo {result.runs} repeticiones (mínimo {MIN_RUNS})"))
        self.stdout.write(
            f"base {1000 * result.base_mean:.2f} ms, refinado {1000 * result.pnp_mean:.2f} ms "
            f"(x{result.ratio:.1f}, K={result.iterations})"
        )
        self.stdout.write(self.style.SUCCESS(f"Tiempos en {path}"))
