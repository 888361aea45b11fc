from django.core.management.base import BaseCommand, CommandError

from analysis.heatmaps import write_improvement_map
from evaluation.reports import metric_row, write_metrics_csv
from pnpdepth.mixins import PipelineCommandMixin
from refinement.batch import refine_batch
from scenes import netpbm
from sparsity.sampling import percent_samples


class Command(PipelineCommandMixin, BaseCommand):
    help = "Refina las predicciones de un checkpoint con muestras dispersas e informa antes/después"

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--checkpoint', required=True, help="Checkpoint .pnpd")
        parser.add_argument('--report', default=None, help="CSV de métricas (por defecto en output_dir)")
        parser.add_argument('--scenes', default=None, help="Directorio de escenas")
        parser.add_argument('--maps', action='store_true', help="Escribe profundidades y mapas de mejora")

    def handle(self, *args, **options):
        self.run_pipeline(self.refine, options)

    def refine(self, options):
        cfg = self.load_config(options['config'])
        model = self.load_model(options['checkpoint'])
        scenes = self.load_scenes(cfg, options['scenes'])
        items = [(scene, self.sparse_for(cfg, scene, i)) for i, scene in enumerate(scenes)]
        report = refine_batch(model, items, cfg.pnp_config())
        if not report.outcomes:
            errors = "; ".join(e for _, errs in report.failures for e in errs)
            raise CommandError(f"every scene failed: {errors}", returncode=2)

        out = cfg.output_path()
        n_mean = round(sum(o.n_samples for o in report.outcomes) / len(report.outcomes))
        h, w = scenes[0].height, scenes[0].width
        pct = percent_samples(n_mean, h, w)
        method = cfg.lidar_preset or f"uniform-{n_mean}"
        before, after = report.mean_before(), report.mean_after()
        rows = [
            metric_row(model.arch.value, before, n_mean, pct),
            metric_row(f"{model.arch.value}+pnp ({method})", after, n_mean, pct, baseline=before),
        ]
        path = write_metrics_csv(options['report'] or out / 'refine_report.csv', rows)

        if options["maps"]:
            out.mkdir(parents=True, exist_ok=True)
            for o in report.outcomes:
                scene = scenes[o.index]
                netpbm.write_depth(out / f"scene_{o.index:04d}_refined.pgm", o.result.depth.data[0])
                write_improvement_map(out / f"scene_{o.index:04d}_gain.pgm",
                                      o.result.base, o.result.depth, scene.depth)

        for row in rows:
            self.stdout.write(f"{row['method']}: RMSE {row['rmse']}  MAE {row['mae']}  MRE {row['mre']}")
        if report.failure_count:
            self.stderr.write(f"{report.failure_count} escenas con errores")
        self.stdout.write(self.style.SUCCESS(f"Informe en {path}"))
