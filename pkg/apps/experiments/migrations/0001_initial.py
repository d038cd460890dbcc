# Generated by Django 6.0.2 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "command",
                    models.CharField(
                        choices=[
                            ("green-check", "Green operator check"),
                            ("solve", "Single solve"),
                            ("ensemble", "Ensemble"),
                            ("clt", "Central limit test"),
                            ("lln", "Law of large numbers test"),
                            ("borel-cantelli", "Exceedance check"),
                        ],
                        max_length=20,
                    ),
                ),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("passed", "Passed"),
                            ("failed", "Failed"),
                            ("error", "Error"),
                        ],
                        max_length=10,
                    ),
                ),
                ("seed", models.BigIntegerField(default=0)),
                (
                    "config",
                    models.JSONField(default=dict, help_text="Resolved experiment config"),
                ),
                ("report", models.JSONField(blank=True, default=dict)),
                ("output_dir", models.CharField(blank=True, default="", max_length=500)),
                ("exit_code", models.IntegerField(default=0)),
                ("error_message", models.TextField(blank=True, default="")),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("finished_at", models.DateTimeField(blank=True, null=True)),
            ],
            options={
                "verbose_name": "Experiment Run",
                "verbose_name_plural": "Experiment Runs",
                "db_table": "experiment_runs",
                "ordering": ["-created_at"],
            },
        ),
    ]
