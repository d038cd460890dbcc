from django.urls import path
from . import views

urlpatterns = [
    # Recorded runs
    path('runs/', views.run_list, name='run-list'),
    path('runs/<int:run_id>/', views.run_detail, name='run-detail'),

    # Config validation
    path('configs/validate/', views.validate_config, name='config-validate'),
]
