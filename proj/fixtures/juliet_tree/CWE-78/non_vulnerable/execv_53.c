static void goodG2B()
{
   wchar_t * data;
   wchar_t dataBuffer[100] = COMMAND_ARG2;
   data = dataBuffer;
   /* FIX: Append a fixed string to data (not user / external input) */
   wcscat(data, L"*.*");
   CWE78_OS_Command_Injection__wchar_t_file_w32_execv_53b_goodG2BSink(data);
}
