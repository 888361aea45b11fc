from pathlib import Path
import os
from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")

# Set DEBUG based on environment variable - default to False
DEBUG = os.getenv("DEBUG", "False") == "True"

# No hay superficie web: la clave solo la exige el registro de Django
SECRET_KEY = os.getenv("SECRET_KEY", "pnpdepth-local-only")

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    # Apps del proyecto
    'tensorcore',
    'scenes',
    'sparsity',
    'depthnet',
    'refinement',
    'evaluation',
    'analysis',
]

# Sin base de datos: los tests usan SimpleTestCase
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'es'
TIME_ZONE = 'Europe/Madrid'
USE_I18N = True
USE_TZ = True

# ---- Directorios de trabajo ----
PNP_OUTPUT_DIR = Path(os.getenv("PNP_OUTPUT_DIR", BASE_DIR / "output"))
PNP_SCENE_DIR = Path(os.getenv("PNP_SCENE_DIR", PNP_OUTPUT_DIR / "scenes"))

# ---- Semilla global ----
# Si está definida, sustituye la semilla de cualquier RunConfig
PNP_SEED = os.getenv("PNP_SEED")

# Hilos para los barridos (1 = determinista y secuencial)
PNP_WORKERS = int(os.getenv("PNP_WORKERS", "1"))

# ---- Valores por defecto ----
# Claves admitidas en los ficheros RunConfig y su valor si faltan
PNP_DEFAULTS = {
    'arch': 'plain_cnn',
    'input_mode': 'sd',
    'tap': '',
    'alpha': 0.01,
    'iterations': 5,
    'loss': 'l1',
    'update_rule': 'sign',
    'adam_beta1': 0.9,
    'adam_beta2': 0.999,
    'adam_eps': 1e-8,
    'n_samples': None,
    'lidar_preset': '',
    'seed': 0,
    'height': 48,
    'width': 64,
    'd_min': 0.5,
    'd_max': 10.0,
    'n_objects': 4,
    'n_scenes': 20,
    'epochs': 30,
    'batch_size': 4,
    'learning_rate': 1e-2,
    'train_loss': 'l1',
    # Rango log-uniforme de muestras por escena al entrenar (vacío = n_samples fijo)
    'train_samples_min': 10,
    'train_samples_max': 500,
    'scene_dir': '',
    'output_dir': '',
}

# Tamaño del banco de pruebas de refinamiento (escenas de entrenamiento y de test, épocas)
PNP_BENCHMARK = {
    'train_scenes': int(os.getenv("PNP_BENCH_TRAIN", "200")),
    'test_scenes': int(os.getenv("PNP_BENCH_TEST", "100")),
    'epochs': int(os.getenv("PNP_BENCH_EPOCHS", "30")),
}

# Configuración de logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
PNP_LOG_FORMAT = os.getenv("PNP_LOG_FORMAT", "plain")

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s [%(process)d]: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': PNP_LOG_FORMAT,
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        }
        for app in INSTALLED_APPS + ['pnpdepth']
    },
}
