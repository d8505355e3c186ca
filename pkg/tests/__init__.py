# latentknn tests
