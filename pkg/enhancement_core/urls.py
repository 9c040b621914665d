"""
URL configuration for enhancement_core.
"""
from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/', include('speech_enhancement.urls')),
    path('api-auth/', include('rest_framework.urls')),
]
