import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'pnpdepth.settings')
django.setup()
