from django.conf import settings
from django.core.management.base import BaseCommand

from analysis.sweeps import SweepKind, sweep
from pnpdepth.mixins import PipelineCommandMixin


class Command(PipelineCommandMixin, BaseCommand):
    help = "Barre iteraciones, tap, número de muestras o preset LiDAR y escribe un CSV"

    def add_arguments(self, parser):
        parser.add_argument('--kind', required=True, choices=[k.value for k in SweepKind])
        self.add_config_argument(parser)
        parser.add_argument('--checkpoint', required=True, help="Checkpoint .pnpd")
        parser.add_argument('--values', default=None,
                            help="Valores separados por comas, en orden creciente")
        parser.add_argument('--scenes', default=None, help="Directorio de escenas")
        parser.add_argument('--out', default=None, help="CSV de salida")
        parser.add_argument('--workers', type=int, default=None,
                            help=f"Hilos (por defecto PNP_WORKERS={settings.PNP_WORKERS})")
        parser.add_argument('--no-runtime', action='store_true',
                            help="Omite la columna de tiempos (CSV reproducible byte a byte)")

    def handle(self, *args, **options):
        self.run_pipeline(self.sweep, options)

    def sweep(self, options):
        kind = SweepKind.parse(options['kind'])
        cfg = self.load_config(options['config'])
        model = self.load_model(options['checkpoint'])
        scenes = self.load_scenes(cfg, options['scenes'])
        values = None
        if options['values']:
            values = [v.strip() for v in options['values'].split(',') if v.strip()]
        result = sweep(kind, model, scenes, cfg.pnp_config(), values=values,
                       n_samples=cfg.n_samples, seed=cfg.seed, workers=options['workers'])
        out = options['out'] or cfg.output_path() / f"sweep_{kind.value}.csv"
        path = result.write_csv(out, include_runtime=not options['no_runtime'])

        for row in result.rows():
            self.stdout.write(f"{row['setting']}: RMSE {row['rmse_before']} -> {row['rmse_after']} ({row['rmse_gain']})")
        if result.ordering:
            self.stdout.write(f"Cobertura: {' > '.join(result.ordering)}")
        self.stdout.write(self.style.SUCCESS(f"Barrido en {path}"))
