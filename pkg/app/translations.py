import locale

TRANSLATIONS = {
    "en": {
        "app_title": "Triage Fusion - late-fusion triage experiments",
        "records_loaded": "Records accepted",
        "rows_rejected": "Rows rejected",
        "rejects_written": "Reject report written to",
        "cohort_written": "Synthetic cohort written to",
        "cleaned_written": "Cleaned records written to",
        "cohort_sizes": "Cohort sizes (adult / pediatric)",
        "pediatric_empty": "Pediatric cohort is empty, pediatric table omitted",
        "training_tabular": "Training tabular models",
        "training_text": "Training text models",
        "training_meta": "Training meta-classifier",
        "artifacts_written": "Base-model artifacts written to",
        "report_written": "Report written to",
        "sweep_cell": "Sweep cell",
        "sweep_done": "Dropout sweep finished",
        "strata_done": "Age-strata ablation finished",
        "missing_artifacts": "Base-model artifacts not found, run `train` first",
        "config_error": "Configuration error",
        "data_error": "Data error",
        "training_error": "Training failure",
        "report_error": "Report error",
        "missing text": "missing text",
        "invalid acuity": "invalid acuity",
        "invalid age": "invalid age",
        "missing record id": "missing record id",
        "duplicate record id": "duplicate record id",
    },
    "ru": {
        "app_title": "Triage Fusion - эксперименты с поздним слиянием",
        "records_loaded": "Принято записей",
        "rows_rejected": "Отклонено строк",
        "rejects_written": "Отчет об отклоненных строках записан в",
        "cohort_written": "Синтетическая когорта записана в",
        "cleaned_written": "Очищенные записи записаны в",
        "cohort_sizes": "Размеры когорт (взрослые / дети)",
        "pediatric_empty": "Детская когорта пуста, детская таблица пропущена",
        "training_tabular": "Обучение табличных моделей",
        "training_text": "Обучение текстовых моделей",
        "training_meta": "Обучение мета-классификатора",
        "artifacts_written": "Артефакты базовых моделей записаны в",
        "report_written": "Отчет записан в",
        "sweep_cell": "Ячейка перебора",
        "sweep_done": "Перебор dropout завершен",
        "strata_done": "Абляция по возрастным группам завершена",
        "missing_artifacts": "Артефакты базовых моделей не найдены, сначала выполните `train`",
        "config_error": "Ошибка конфигурации",
        "data_error": "Ошибка данных",
        "training_error": "Ошибка обучения",
        "report_error": "Ошибка отчета",
        "missing text": "нет текста жалобы",
        "invalid acuity": "некорректный уровень сортировки",
        "invalid age": "некорректный возраст",
        "missing record id": "нет идентификатора записи",
        "duplicate record id": "повторный идентификатор записи",
    },
}


def _system_language() -> str:
    try:
        lang, _enc = locale.getlocale()
    except ValueError:
        return "en"
    if lang and lang.lower().startswith("ru"):
        return "ru"
    return "en"


DEFAULT_LANGUAGE = _system_language()


def _(lang, key):
    """Simple translation helper"""
    return TRANSLATIONS.get(lang, {}).get(key, key)
