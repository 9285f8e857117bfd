from jinja2 import Environment, PackageLoader, StrictUndefined


def fmt_number(value, digits=6):
    """Format a number for a report cell, dashes for missing values"""
    if value is None:
        return '-'
    if isinstance(value, float):
        return '{0:.{1}g}'.format(value, digits)
    return str(value)


def generate_report_from_template(file_name, **context):
    """Generate Markdown report from Jinja2 template"""
    jinja_env = Environment(
        loader=PackageLoader('lpqe', 'templates'),
        autoescape=False,
        lstrip_blocks=True,
        trim_blocks=True,
        undefined=StrictUndefined)
    jinja_env.filters['num'] = fmt_number
    return jinja_env.get_template(file_name).render(**context)
