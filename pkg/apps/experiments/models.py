from django.db import models


class ExperimentRun(models.Model):
    """
    One invocation of the `lab` management command.
    Keeps the resolved config and the report so a run can be reproduced.
    """

    class Command(models.TextChoices):
        GREEN_CHECK = 'green-check', 'Green operator check'
        SOLVE = 'solve', 'Single solve'
        ENSEMBLE = 'ensemble', 'Ensemble'
        CLT = 'clt', 'Central limit test'
        LLN = 'lln', 'Law of large numbers test'
        BOREL_CANTELLI = 'borel-cantelli', 'Exceedance check'

    class Status(models.TextChoices):
        PASSED = 'passed', 'Passed'          # every verdict holds
        FAILED = 'failed', 'Failed'          # a verdict failed
        ERROR = 'error', 'Error'             # precondition, hypothesis or solver error

    command = models.CharField(max_length=20, choices=Command.choices)
    status = models.CharField(max_length=10, choices=Status.choices)
    seed = models.BigIntegerField(default=0)
    config = models.JSONField(default=dict, help_text='Resolved experiment config')
    report = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True, default='')
    exit_code = models.IntegerField(default=0)
    error_message = models.TextField(blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'experiment_runs'
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'
        ordering = ['-created_at']

    def __str__(self):
        return f"Run #{self.pk} - {self.command} ({self.status})"

    @property
    def passed(self) -> bool:
        return self.status == self.Status.PASSED
