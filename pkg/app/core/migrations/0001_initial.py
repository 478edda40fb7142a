# Generated by Django 5.1.3 on 2026-10-19 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('seed', models.IntegerField()),
                ('stage', models.IntegerField()),
                ('status', models.CharField(choices=[('running', 'Running'), ('done', 'Done'), ('failed', 'Failed')], default='running', max_length=16)),
                ('checkpoint_path', models.CharField(blank=True, max_length=1024)),
                ('metrics_path', models.CharField(blank=True, max_length=1024)),
                ('final_loss', models.FloatField(null=True)),
                ('config_text', models.TextField(blank=True)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
        ),
        migrations.CreateModel(
            name='EvaluationReport',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('checkpoint_path', models.CharField(max_length=1024)),
                ('stage_select', models.IntegerField()),
                ('way', models.IntegerField()),
                ('shot', models.IntegerField()),
                ('query', models.IntegerField()),
                ('episodes', models.IntegerField()),
                ('accuracy', models.FloatField()),
                ('ci95', models.FloatField()),
                ('created', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(null=True, on_delete=django.db.models.deletion.SET_NULL, to='core.trainingrun')),
            ],
        ),
    ]
