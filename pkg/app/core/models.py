from django.db import models


class TrainingRun(models.Model):
    """One invocation of the train command"""
    STATUS_RUNNING = "running"
    STATUS_DONE = "done"
    STATUS_FAILED = "failed"
    STATUS_CHOICES = [
        (STATUS_RUNNING, "Running"),
        (STATUS_DONE, "Done"),
        (STATUS_FAILED, "Failed"),
    ]

    name = models.CharField(max_length=255)
    seed = models.IntegerField()
    stage = models.IntegerField()
    status = models.CharField(
        max_length=16,
        choices=STATUS_CHOICES,
        default=STATUS_RUNNING,
    )
    checkpoint_path = models.CharField(max_length=1024, blank=True)
    metrics_path = models.CharField(max_length=1024, blank=True)
    final_loss = models.FloatField(null=True)
    config_text = models.TextField(blank=True)
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"{self.name} (stage {self.stage}, {self.status})"


class EvaluationReport(models.Model):
    """Few-shot accuracy of one checkpoint under one protocol"""
    run = models.ForeignKey(
        TrainingRun,
        null=True,
        on_delete=models.SET_NULL,
    )
    checkpoint_path = models.CharField(max_length=1024)
    stage_select = models.IntegerField()
    way = models.IntegerField()
    shot = models.IntegerField()
    query = models.IntegerField()
    episodes = models.IntegerField()
    accuracy = models.FloatField()
    ci95 = models.FloatField()
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return (
            f"{self.way}-way {self.shot}-shot: "
            f"{100 * self.accuracy:.2f} +- {100 * self.ci95:.2f}"
        )
